use std::collections::{BTreeMap, BTreeSet};

use super::judge::jaccard;
use super::{
    lower_median, BuildInputs, BuilderConfig, EdgeKind, EdgeVerdict, Milestone, MilestoneDag, MilestoneEdge,
    SemanticJudge, Strength,
};
pub use super::judge::CandidateEdge;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
#[error("commit dependencies force a milestone cycle: {}", cycle.join(" -> "))]
pub struct InconsistentPartition {
    pub cycle: Vec<String>,
}

fn reaches(adj: &[BTreeSet<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    while let Some(u) = stack.pop() {
        if u == to {
            return true;
        }
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    false
}

/// Derives milestone edges.
///
/// Every cross-milestone commit edge yields a mandatory strong edge. Other
/// pairs become candidates, oriented by symbol reference (the definer is
/// upstream) or else by median commit time, ranked, and confirmed by the
/// judge in descending rank; a confirmed edge that would close a cycle is
/// dropped.
pub fn infer_dependencies(
    milestones: Vec<Milestone>,
    inputs: &BuildInputs<'_>,
    judge: &dyn SemanticJudge,
    _cfg: &BuilderConfig,
) -> Result<MilestoneDag, InconsistentPartition> {
    let k = milestones.len();
    let mut owner = std::collections::HashMap::new();
    for (i, m) in milestones.iter().enumerate() {
        for c in &m.commits {
            owner.insert(c, i);
        }
    }
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    let mut edges: BTreeMap<(usize, usize), Strength> = BTreeMap::new();
    for e in &inputs.dag.edges {
        if let (Some(&a), Some(&b)) = (owner.get(&e.from), owner.get(&e.to)) {
            if a != b {
                adj[a].insert(b);
                edges.insert((a, b), Strength::Strong);
            }
        }
    }
    let as_vec: Vec<Vec<usize>> = adj.iter().map(|s| s.iter().copied().collect()).collect();
    if let Err(stuck) = crate::graph::kahn_order(&as_vec) {
        return Err(InconsistentPartition {
            cycle: witness_cycle(&adj, stuck)
                .into_iter()
                .map(|i| milestones[i].id.clone())
                .collect(),
        });
    }

    let files: Vec<BTreeSet<&str>> = milestones.iter().map(|m| inputs.files_of(&m.commits)).collect();
    let authors: Vec<BTreeSet<&str>> = milestones
        .iter()
        .map(|m| m.commits.iter().map(|c| inputs.commit(c).author.as_str()).collect())
        .collect();
    let medians: Vec<i64> = milestones
        .iter()
        .map(|m| lower_median(m.commits.iter().map(|c| inputs.commit(c).timestamp).collect()))
        .collect();
    let defined: Vec<BTreeSet<&str>> = milestones
        .iter()
        .map(|m| m.commits.iter().flat_map(|c| inputs.symbols.added_by(c)).collect())
        .collect();
    let referenced: Vec<BTreeSet<&str>> = milestones
        .iter()
        .map(|m| {
            m.commits
                .iter()
                .filter_map(|c| inputs.symbols.references.get(c))
                .flatten()
                .map(String::as_str)
                .collect()
        })
        .collect();
    // b uses something a introduced and does not define itself
    let uses = |a: usize, b: usize| {
        defined[a]
            .iter()
            .any(|s| referenced[b].contains(s) && !defined[b].contains(s))
    };

    let mut candidates = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            if edges.contains_key(&(a, b)) || edges.contains_key(&(b, a)) {
                continue;
            }
            let (ab, ba) = (uses(a, b), uses(b, a));
            let (up, down) = if ab != ba {
                if ab { (a, b) } else { (b, a) }
            } else if (medians[a], &milestones[a].id) <= (medians[b], &milestones[b].id) {
                (a, b)
            } else {
                (b, a)
            };
            let file_overlap = jaccard(&files[a], &files[b]);
            let author_overlap = jaccard(&authors[a], &authors[b]);
            let symbol_reference = ab || ba;
            let upstream_earlier = medians[up] <= medians[down];
            let rank = f64::from(u8::from(symbol_reference))
                + file_overlap
                + 0.25 * author_overlap
                + 0.1 * f64::from(u8::from(upstream_earlier));
            candidates.push((
                up,
                down,
                CandidateEdge {
                    from: milestones[up].id.clone(),
                    to: milestones[down].id.clone(),
                    file_overlap,
                    symbol_reference,
                    upstream_earlier,
                    author_overlap,
                    rank,
                },
            ));
        }
    }
    candidates.sort_by(|x, y| {
        y.2.rank
            .total_cmp(&x.2.rank)
            .then_with(|| (&x.2.from, &x.2.to).cmp(&(&y.2.from, &y.2.to)))
    });
    for (up, down, cand) in candidates {
        let strength = match judge.confirm_edge(&cand) {
            EdgeVerdict::AcceptStrong => Strength::Strong,
            EdgeVerdict::AcceptWeak => Strength::Weak,
            EdgeVerdict::Reject => continue,
        };
        if reaches(&adj, down, up) {
            continue;
        }
        adj[up].insert(down);
        edges.insert((up, down), strength);
    }

    let mut out: Vec<MilestoneEdge> = edges
        .into_iter()
        .map(|((a, b), strength)| MilestoneEdge {
            from: milestones[a].id.clone(),
            to: milestones[b].id.clone(),
            strength,
            kind: EdgeKind::Functional,
        })
        .collect();
    out.sort_by(|x, y| (&x.from, &x.to).cmp(&(&y.from, &y.to)));
    Ok(MilestoneDag { milestones, edges: out })
}

/// A cycle through nodes reachable from `start` that still carry indegree.
fn witness_cycle(adj: &[BTreeSet<usize>], start: usize) -> Vec<usize> {
    // follow successors that can reach back to the walk until a repeat
    let mut path = vec![start];
    let mut pos = BTreeMap::from([(start, 0usize)]);
    let mut u = start;
    loop {
        let next = adj[u]
            .iter()
            .copied()
            .find(|&v| reaches(adj, v, u))
            .expect("node on a cycle has a successor on it");
        if let Some(&p) = pos.get(&next) {
            let mut cyc = path[p..].to_vec();
            cyc.push(next);
            return cyc;
        }
        pos.insert(next, path.len());
        path.push(next);
        u = next;
    }
}
