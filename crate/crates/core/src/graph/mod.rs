//! Commit-level dependency graph and static signals.

mod cochange;
mod metrics;
mod symbols;

pub use cochange::{compute_cochange, CoChangeMatrix};
pub use metrics::{topo_metrics, NodeMetrics, TopoMetrics};
pub(crate) use metrics::{kahn_order, kahn_order_by, reach_bits};
pub use symbols::{
    extract_symbol_changes, referenced_identifiers, SymbolAction, SymbolChange, SymbolKind,
    SymbolRef, SymbolTable,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::history::{ChangeKind, CommitRange};
use crate::ids::CommitId;
use crate::par::Exec;
use crate::vcs::VcsAdapter;

/// Inclusive line span in a file at the dependent commit's first parent.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub path: String,
    pub start: u32,
    pub end: u32,
}

/// `to` depends on `from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitEdge {
    pub from: CommitId,
    pub to: CommitId,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommitDag {
    /// Chronological (first-parent) order.
    pub nodes: Vec<CommitId>,
    /// Sorted by `(from, to)` position.
    pub edges: Vec<CommitEdge>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("cycle detected through {0}")]
    CycleDetected(CommitId),
    #[error("edge references unknown commit {0}")]
    UnknownNode(CommitId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlameWarning {
    pub path: String,
    pub commit: CommitId,
    pub message: String,
}

impl CommitDag {
    pub fn index(&self) -> HashMap<&CommitId, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n, i)).collect()
    }

    /// Adjacency as index lists; fails on edges to unknown nodes.
    pub fn adjacency(&self) -> Result<Vec<Vec<usize>>, GraphError> {
        let idx = self.index();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let f = *idx.get(&e.from).ok_or_else(|| GraphError::UnknownNode(e.from.clone()))?;
            let t = *idx.get(&e.to).ok_or_else(|| GraphError::UnknownNode(e.to.clone()))?;
            adj[f].push(t);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        Ok(adj)
    }

    pub fn from_pairs(nodes: Vec<CommitId>, pairs: &[(usize, usize)]) -> CommitDag {
        let edges = pairs
            .iter()
            .map(|&(f, t)| CommitEdge {
                from: nodes[f].clone(),
                to: nodes[t].clone(),
                evidence: vec![Evidence { path: "synthetic".into(), start: 1, end: 1 }],
            })
            .collect();
        CommitDag { nodes, edges }
    }
}

/// Builds the blame-based dependency DAG over a filtered range.
///
/// For every line a commit removes or rewrites (renames rewrite the whole
/// old file), the line is blamed at the commit's first parent; an in-range
/// attributing commit becomes an upstream dependency. Lines that reached
/// their current path through a rename are attributed to the latest
/// in-range renamer instead of the original author.
pub fn build_commit_dag(
    range: &CommitRange,
    history: &dyn VcsAdapter,
    exec: Exec,
) -> (CommitDag, Vec<BlameWarning>) {
    let pos = range.position_map();
    let per_commit = exec.map_range(range.commits.len(), |vi| dependencies_of(range, &pos, vi, history));

    let mut merged: BTreeMap<(usize, usize), BTreeSet<Evidence>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (vi, (deps, warns)) in per_commit.into_iter().enumerate() {
        for (ui, ev) in deps {
            merged.entry((ui, vi)).or_default().extend(ev);
        }
        warnings.extend(warns);
    }
    let edges = merged
        .into_iter()
        .map(|((u, v), ev)| CommitEdge {
            from: range.commits[u].id.clone(),
            to: range.commits[v].id.clone(),
            evidence: ev.into_iter().collect(),
        })
        .collect();
    (CommitDag { nodes: range.ids(), edges }, warnings)
}

type Deps = Vec<(usize, Vec<Evidence>)>;

fn dependencies_of(
    range: &CommitRange,
    pos: &BTreeMap<&CommitId, usize>,
    vi: usize,
    history: &dyn VcsAdapter,
) -> (Deps, Vec<BlameWarning>) {
    let commit = &range.commits[vi];
    let mut warnings = Vec::new();
    let Some(parent) = commit.first_parent() else {
        return (Vec::new(), warnings);
    };
    let kept: BTreeSet<&str> = commit.touched_paths();
    let diffs = match history.diff(&commit.id) {
        Ok(d) => d,
        Err(e) => {
            warnings.push(BlameWarning {
                path: String::new(),
                commit: commit.id.clone(),
                message: e.to_string(),
            });
            return (Vec::new(), warnings);
        }
    };
    let mut by_upstream: BTreeMap<usize, Vec<Evidence>> = BTreeMap::new();
    for fd in diffs {
        let Some(old) = fd.old_path.as_deref() else { continue };
        let relevant = kept.contains(old) || fd.new_path.as_deref().is_some_and(|p| kept.contains(p));
        if !relevant {
            continue;
        }
        let renamed = fd.new_path.as_deref().is_some_and(|n| n != old);
        let blame = match history.blame(old, parent) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("blame unavailable for {old} at {parent}: {e}");
                warnings.push(BlameWarning {
                    path: old.to_string(),
                    commit: commit.id.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        let touched: Vec<u32> = if renamed {
            (1..=blame.len() as u32).collect()
        } else {
            fd.hunks
                .iter()
                .flat_map(|h| h.old_start..h.old_start + h.old_len)
                .collect()
        };
        let mut attributed: Vec<(usize, u32)> = Vec::new();
        for line in touched {
            let Some(b) = blame.get(line as usize - 1) else { continue };
            let Some(&ui) = pos.get(&b.commit) else { continue };
            let ui = if b.orig_path != old {
                latest_renamer(range, old, ui, vi).unwrap_or(ui)
            } else {
                ui
            };
            if ui < vi {
                attributed.push((ui, line));
            }
        }
        for (ui, span) in spans(attributed) {
            by_upstream.entry(ui).or_default().push(Evidence {
                path: old.to_string(),
                start: span.0,
                end: span.1,
            });
        }
    }
    (by_upstream.into_iter().collect(), warnings)
}

/// Latest commit in `(after, before)` that renamed something onto `path`.
fn latest_renamer(range: &CommitRange, path: &str, after: usize, before: usize) -> Option<usize> {
    (after + 1..before).rev().find(|&i| {
        range.commits[i]
            .file_changes
            .iter()
            .any(|fc| fc.kind == ChangeKind::Rename && fc.path == path)
    })
}

/// Collapses `(upstream, line)` pairs into contiguous spans per upstream.
fn spans(mut pairs: Vec<(usize, u32)>) -> Vec<(usize, (u32, u32))> {
    pairs.sort_unstable();
    let mut out: Vec<(usize, (u32, u32))> = Vec::new();
    for (u, l) in pairs {
        match out.last_mut() {
            Some((pu, (_, end))) if *pu == u && *end + 1 == l => *end = l,
            _ => out.push((u, (l, l))),
        }
    }
    out
}

/// Symbol changes and added-line references for every commit in the range.
pub fn build_symbol_table(range: &CommitRange, history: &dyn VcsAdapter, exec: Exec) -> SymbolTable {
    let per_commit = exec.map(&range.commits, |c| {
        let read = |rev: Option<&CommitId>, path: &str| {
            rev.and_then(|r| history.read_file(r, path).ok().flatten())
                .and_then(|b| String::from_utf8(b).ok())
        };
        let parent = c.first_parent().cloned();
        let changes = extract_symbol_changes(
            c,
            &|p| read(parent.as_ref(), p),
            &|p| read(Some(&c.id), p),
        );
        let refs = history
            .diff(&c.id)
            .map(|d| {
                let kept = c.touched_paths();
                let relevant: Vec<_> = d
                    .into_iter()
                    .filter(|fd| fd.new_path.as_deref().is_some_and(|p| kept.contains(p)))
                    .collect();
                referenced_identifiers(&relevant)
            })
            .unwrap_or_default();
        (changes, refs)
    });
    let mut table = SymbolTable::default();
    for (c, (changes, refs)) in range.commits.iter().zip(per_commit) {
        table.changes.extend(changes);
        table.references.insert(c.id.clone(), refs);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_merge_contiguous_lines() {
        let s = spans(vec![(0, 3), (0, 1), (0, 2), (1, 5), (0, 7)]);
        assert_eq!(s, vec![(0, (1, 3)), (0, (7, 7)), (1, (5, 5))]);
    }
}
