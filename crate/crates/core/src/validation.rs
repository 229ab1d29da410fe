//! Quality checks over a milestone DAG and its test signals.
//!
//! Every check is read-only except [`check_signal_coverage`], which returns
//! a relabelled copy of the graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{kahn_order, CommitDag};
use crate::history::CommitRange;
use crate::ids::CommitId;
use crate::milestone::{EdgeKind, MilestoneDag, MilestoneEdge, Strength};
use crate::testbed::{name_matches, TestTransitionReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub passed: bool,
    /// Range commits no milestone holds.
    pub gaps: Vec<CommitId>,
    /// Milestone commits outside the range.
    pub extras: Vec<CommitId>,
    /// Commits held more than once.
    pub duplicates: Vec<CommitId>,
}

pub fn check_completeness(mdag: &MilestoneDag, range: &CommitRange) -> CompletenessReport {
    let mut seen: BTreeMap<&CommitId, usize> = BTreeMap::new();
    for c in mdag.milestones.iter().flat_map(|m| &m.commits) {
        *seen.entry(c).or_default() += 1;
    }
    let expected: BTreeSet<&CommitId> = range.commits.iter().map(|c| &c.id).collect();
    let gaps: Vec<CommitId> = expected.iter().filter(|c| !seen.contains_key(*c)).map(|c| (*c).clone()).collect();
    let extras: Vec<CommitId> = seen.keys().filter(|c| !expected.contains(*c)).map(|c| (*c).clone()).collect();
    let duplicates: Vec<CommitId> = seen.iter().filter(|(_, &n)| n > 1).map(|(c, _)| (*c).clone()).collect();
    CompletenessReport {
        passed: gaps.is_empty() && extras.is_empty() && duplicates.is_empty(),
        gaps,
        extras,
        duplicates,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingDependency {
    pub from_commit: CommitId,
    pub to_commit: CommitId,
    pub from_milestone: String,
    pub to_milestone: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub passed: bool,
    pub missing: Vec<MissingDependency>,
}

/// Every cross-milestone commit edge needs a direct milestone edge.
pub fn check_dependency_consistency(mdag: &MilestoneDag, cdag: &CommitDag) -> ConsistencyReport {
    let owner = mdag.milestone_of_commit();
    let edges: BTreeSet<(&str, &str)> = mdag.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
    let missing: Vec<MissingDependency> = cdag
        .edges
        .iter()
        .filter_map(|e| {
            let (a, b) = (&mdag.milestones[*owner.get(&e.from)?], &mdag.milestones[*owner.get(&e.to)?]);
            (a.id != b.id && !edges.contains(&(a.id.as_str(), b.id.as_str()))).then(|| MissingDependency {
                from_commit: e.from.clone(),
                to_commit: e.to.clone(),
                from_milestone: a.id.clone(),
                to_milestone: b.id.clone(),
            })
        })
        .collect();
    ConsistencyReport { passed: missing.is_empty(), missing }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcyclicReport {
    pub passed: bool,
    pub dfs_acyclic: bool,
    pub kahn_acyclic: bool,
    /// A closed walk `[a, b, ..., a]` when a cycle exists.
    pub witness: Option<Vec<String>>,
}

/// Iterative three-colour DFS; returns a cycle as node indices with the
/// first node repeated at the end.
pub fn dfs_cycle(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Colour {
        White,
        Grey,
        Black,
    }
    let n = adj.len();
    let mut colour = vec![Colour::White; n];
    for root in 0..n {
        if colour[root] != Colour::White {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        colour[root] = Colour::Grey;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(&v) = adj[u].get(*next) {
                *next += 1;
                match colour[v] {
                    Colour::White => {
                        colour[v] = Colour::Grey;
                        stack.push((v, 0));
                    }
                    Colour::Grey => {
                        let start = stack.iter().position(|&(w, _)| w == v).expect("grey node is on the stack");
                        let mut cyc: Vec<usize> = stack[start..].iter().map(|&(w, _)| w).collect();
                        cyc.push(v);
                        return Some(cyc);
                    }
                    Colour::Black => {}
                }
            } else {
                colour[u] = Colour::Black;
                stack.pop();
            }
        }
    }
    None
}

/// Runs DFS and Kahn independently; passes only if both call it acyclic.
pub fn check_acyclic(mdag: &MilestoneDag) -> AcyclicReport {
    let adj = mdag.adjacency();
    let cycle = dfs_cycle(&adj);
    let kahn_acyclic = kahn_order(&adj).is_ok();
    let dfs_acyclic = cycle.is_none();
    AcyclicReport {
        passed: dfs_acyclic && kahn_acyclic,
        dfs_acyclic,
        kahn_acyclic,
        witness: cycle.map(|c| c.into_iter().map(|i| mdag.milestones[i].id.clone()).collect()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Milestones without any F2P or N2P test, now maintenance tasks.
    pub ungraded: Vec<String>,
    /// Edges added to bypass them.
    pub bridges: Vec<MilestoneEdge>,
}

/// Marks milestones without fail-to-pass or none-to-pass signals as
/// ungraded and adds bypass edges `X -> Y` for every `X -> m -> Y`.
///
/// Original edges are kept. Ungraded milestones are eliminated one at a time
/// in id order, so chains of them collapse too; a bridge is strong only if
/// both legs are, and an existing edge keeps the stronger strength.
pub fn check_signal_coverage(mdag: &MilestoneDag, reports: &[TestTransitionReport]) -> (MilestoneDag, CoverageReport) {
    let signalled: BTreeSet<&str> = reports
        .iter()
        .filter(|r| !r.required().is_empty())
        .map(|r| r.milestone_id.as_str())
        .collect();
    let mut out = mdag.clone();
    let mut ungraded = Vec::new();
    for m in &mut out.milestones {
        m.graded = signalled.contains(m.id.as_str());
        if !m.graded {
            ungraded.push(m.id.clone());
        }
    }
    let mut edges: BTreeMap<(String, String), (Strength, EdgeKind)> = out
        .edges
        .iter()
        .map(|e| ((e.from.clone(), e.to.clone()), (e.strength, e.kind)))
        .collect();
    let mut added: BTreeSet<(String, String)> = BTreeSet::new();
    for m in &ungraded {
        let preds: Vec<(String, Strength)> = edges.iter().filter(|((_, t), _)| t == m).map(|((f, _), (s, _))| (f.clone(), *s)).collect();
        let succs: Vec<(String, Strength)> = edges.iter().filter(|((f, _), _)| f == m).map(|((_, t), (s, _))| (t.clone(), *s)).collect();
        for (x, sx) in &preds {
            for (y, sy) in &succs {
                if x == y {
                    continue;
                }
                let strength = sx.chain(*sy);
                let key = (x.clone(), y.clone());
                match edges.get_mut(&key) {
                    Some((s, _)) => *s = (*s).min(strength),
                    None => {
                        edges.insert(key.clone(), (strength, EdgeKind::Process));
                        added.insert(key);
                    }
                }
            }
        }
    }
    out.edges = edges
        .into_iter()
        .map(|((from, to), (strength, kind))| MilestoneEdge { from, to, strength, kind })
        .collect();
    let bridges = out.edges.iter().filter(|e| added.contains(&(e.from.clone(), e.to.clone()))).cloned().collect();
    (out, CoverageReport { ungraded, bridges })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternRate {
    pub extracted: u64,
    pub matched: u64,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityStats {
    /// Statically extracted test names that match a collected id.
    pub collection: PatternRate,
    pub per_pattern: BTreeMap<String, PatternRate>,
    pub transitions: u64,
    pub p2f: u64,
    pub p2f_rate: Option<f64>,
    pub outcomes: u64,
    pub error_outcomes: u64,
    pub error_rate: Option<f64>,
    pub flaky_total: u64,
    pub flaky_per_milestone: BTreeMap<String, u64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn rate(extracted: u64, matched: u64) -> PatternRate {
    PatternRate { extracted, matched, rate: ratio(matched, extracted) }
}

pub fn compute_reliability_stats(reports: &[TestTransitionReport]) -> ReliabilityStats {
    let mut per: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let (mut transitions, mut p2f, mut outcomes, mut errors, mut flaky_total) = (0, 0, 0, 0, 0);
    let mut flaky_per_milestone = BTreeMap::new();
    for r in reports {
        for (pattern, names) in &r.extracted {
            let e = per.entry(pattern.clone()).or_default();
            for n in names {
                e.0 += 1;
                e.1 += u64::from(r.collected.iter().any(|id| name_matches(n, id)));
            }
        }
        transitions += r.transitions() as u64;
        p2f += r.p2f.len() as u64;
        outcomes += r.outcomes;
        errors += r.error_outcomes;
        flaky_total += r.flaky.len() as u64;
        flaky_per_milestone.insert(r.milestone_id.clone(), r.flaky.len() as u64);
    }
    let (ex, ma) = per.values().fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    ReliabilityStats {
        collection: rate(ex, ma),
        per_pattern: per.into_iter().map(|(k, (x, y))| (k, rate(x, y))).collect(),
        transitions,
        p2f,
        p2f_rate: ratio(p2f, transitions),
        outcomes,
        error_outcomes: errors,
        error_rate: ratio(errors, outcomes),
        flaky_total,
        flaky_per_milestone,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub completeness: CompletenessReport,
    pub dependency_consistency: ConsistencyReport,
    pub acyclic: AcyclicReport,
    pub signal_coverage: Option<CoverageReport>,
    pub reliability: Option<ReliabilityStats>,
}

/// Runs every check. Signal coverage and reliability are computed only when
/// transition reports are available; they never fail the report.
pub fn validate(
    mdag: &MilestoneDag,
    range: &CommitRange,
    cdag: &CommitDag,
    reports: Option<&[TestTransitionReport]>,
) -> (ValidationReport, Option<MilestoneDag>) {
    let completeness = check_completeness(mdag, range);
    let dependency_consistency = check_dependency_consistency(mdag, cdag);
    let acyclic = check_acyclic(mdag);
    let (graded, coverage) = match reports {
        Some(r) => {
            let (g, c) = check_signal_coverage(mdag, r);
            (Some(g), Some(c))
        }
        None => (None, None),
    };
    let report = ValidationReport {
        passed: completeness.passed && dependency_consistency.passed && acyclic.passed,
        completeness,
        dependency_consistency,
        acyclic,
        signal_coverage: coverage,
        reliability: reports.map(compute_reliability_stats),
    };
    (report, graded)
}

/// Reachability between graded milestones using only graded-to-graded
/// edges, as sorted id pairs.
pub fn graded_reachability(mdag: &MilestoneDag, direct_only: bool) -> BTreeSet<(String, String)> {
    let idx: HashMap<&str, usize> = mdag.index();
    let n = mdag.milestones.len();
    let graded: Vec<bool> = mdag.milestones.iter().map(|m| m.graded).collect();
    let mut adj = vec![Vec::new(); n];
    for e in &mdag.edges {
        let (a, b) = (idx[e.from.as_str()], idx[e.to.as_str()]);
        if !direct_only || (graded[a] && graded[b]) {
            adj[a].push(b);
        }
    }
    let mut out = BTreeSet::new();
    for s in (0..n).filter(|&s| graded[s]) {
        let mut seen = vec![false; n];
        let mut stack = adj[s].clone();
        while let Some(u) = stack.pop() {
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            stack.extend(adj[u].iter().copied());
        }
        for t in (0..n).filter(|&t| seen[t] && graded[t]) {
            out.insert((mdag.milestones[s].id.clone(), mdag.milestones[t].id.clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::test_id;
    use crate::milestone::Milestone;
    use proptest::prelude::*;

    fn ms(id: &str, commits: &[u32]) -> Milestone {
        Milestone {
            id: id.into(),
            title: String::new(),
            commits: commits.iter().map(|&c| test_id(c)).collect(),
            tags: vec![],
            loc: 1,
            graded: true,
        }
    }

    fn edge(a: &str, b: &str, s: Strength) -> MilestoneEdge {
        MilestoneEdge { from: a.into(), to: b.into(), strength: s, kind: EdgeKind::Functional }
    }

    fn dag(ids: &[&str], edges: &[(&str, &str)]) -> MilestoneDag {
        MilestoneDag {
            milestones: ids.iter().enumerate().map(|(i, id)| ms(id, &[i as u32 + 1])).collect(),
            edges: edges.iter().map(|(a, b)| edge(a, b, Strength::Strong)).collect(),
        }
    }

    fn report(id: &str, f2p: &[&str], p2p: &[&str]) -> TestTransitionReport {
        TestTransitionReport {
            milestone_id: id.into(),
            f2p: f2p.iter().map(|s| s.to_string()).collect(),
            p2p: p2p.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn two_cycle_witness() {
        let r = check_acyclic(&dag(&["Ma", "Mb"], &[("Ma", "Mb"), ("Mb", "Ma")]));
        assert!(!r.passed && !r.dfs_acyclic && !r.kahn_acyclic);
        assert_eq!(r.witness.unwrap(), vec!["Ma", "Mb", "Ma"]);
        assert!(check_acyclic(&dag(&["A", "B"], &[("A", "B")])).passed);
    }

    #[test]
    fn only_p2p_becomes_maintenance() {
        let d = dag(&["X", "m", "Y"], &[("X", "m"), ("m", "Y")]);
        let (g, rep) = check_signal_coverage(&d, &[report("X", &["a"], &[]), report("m", &[], &["a"]), report("Y", &["b"], &[])]);
        assert_eq!(rep.ungraded, vec!["m"]);
        assert_eq!(rep.bridges, vec![MilestoneEdge { kind: EdgeKind::Process, ..edge("X", "Y", Strength::Strong) }]);
        assert!(!g.get("m").unwrap().graded);
        let all = [report("X", &["a"], &[]), report("m", &["c"], &[]), report("Y", &["b"], &[])];
        let (g, rep) = check_signal_coverage(&d, &all);
        assert_eq!(g, d);
        assert!(rep.bridges.is_empty());
    }

    #[test]
    fn weak_leg_gives_weak_bridge() {
        let mut d = dag(&["X", "m", "Y"], &[("X", "m")]);
        d.edges.push(edge("m", "Y", Strength::Weak));
        let (_, rep) = check_signal_coverage(&d, &[report("X", &["a"], &[]), report("Y", &["b"], &[])]);
        assert_eq!(rep.bridges[0].strength, Strength::Weak);
    }

    #[test]
    fn chain_with_two_maintenance_nodes_keeps_reachability() {
        let d = dag(&["A", "m", "B", "m2", "C"], &[("A", "m"), ("m", "B"), ("B", "m2"), ("m2", "C")]);
        let reps = [report("A", &["1"], &[]), report("B", &["2"], &[]), report("C", &["3"], &[])];
        let (g, _) = check_signal_coverage(&d, &reps);
        let mut before = d.clone();
        for m in &mut before.milestones {
            m.graded = !m.id.starts_with('m');
        }
        // oracle: closure through any node, restricted to graded endpoints
        let expected = graded_reachability(&before, false);
        assert_eq!(graded_reachability(&g, true), expected);
        assert!(expected.contains(&("A".into(), "C".into())));
    }

    #[test]
    fn completeness_violations() {
        let range = CommitRange {
            start_tag: "a".into(),
            end_tag: "b".into(),
            base: test_id(0),
            head: test_id(3),
            commits: (1..=3)
                .map(|i| crate::history::Commit {
                    id: test_id(i),
                    parent_ids: vec![],
                    author: String::new(),
                    timestamp: 0,
                    message: String::new(),
                    file_changes: vec![],
                    linked_refs: vec![],
                })
                .collect(),
            removed: vec![],
        };
        let exact = MilestoneDag { milestones: vec![ms("A", &[1, 2]), ms("B", &[3])], edges: vec![] };
        assert!(check_completeness(&exact, &range).passed);
        let dup = MilestoneDag { milestones: vec![ms("A", &[1, 2]), ms("B", &[2, 3])], edges: vec![] };
        assert_eq!(check_completeness(&dup, &range).duplicates, vec![test_id(2)]);
        let gap = MilestoneDag { milestones: vec![ms("A", &[1]), ms("B", &[3, 9])], edges: vec![] };
        let r = check_completeness(&gap, &range);
        assert_eq!((r.gaps, r.extras), (vec![test_id(2)], vec![test_id(9)]));
    }

    #[test]
    fn consistency_reports_planted_pair_only() {
        let cdag = CommitDag::from_pairs((1..=4).map(test_id).collect(), &[(0, 1), (1, 2), (2, 3)]);
        let d = MilestoneDag {
            milestones: vec![ms("A", &[1, 2]), ms("B", &[3]), ms("C", &[4])],
            edges: vec![edge("A", "B", Strength::Strong)],
        };
        let r = check_consistency_pairs(&d, &cdag);
        assert_eq!(r, vec![("B".to_string(), "C".to_string())]);
    }

    fn check_consistency_pairs(d: &MilestoneDag, c: &CommitDag) -> Vec<(String, String)> {
        check_dependency_consistency(d, c).missing.into_iter().map(|m| (m.from_milestone, m.to_milestone)).collect()
    }

    #[test]
    fn reliability_arithmetic() {
        let mut r = report("M1", &[], &[]);
        r.extracted.insert("check".into(), (0..10).map(|i| format!("t{i}")).collect());
        r.collected = (0..8).map(|i| format!("s::t{i}")).collect();
        let s = compute_reliability_stats(&[r.clone()]);
        assert_eq!(s.collection.rate, Some(0.8));
        assert_eq!(s.p2f_rate, None);
        let mut big = report("M2", &[], &[]);
        big.p2p = (0..3999).map(|i| format!("p{i}")).collect();
        big.p2f.insert("x".into());
        let s = compute_reliability_stats(&[big]);
        assert!((s.p2f_rate.unwrap() - 0.00025).abs() < 1e-15);
    }

    fn random_graph() -> impl Strategy<Value = Vec<Vec<usize>>> {
        (1usize..50).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(0..n, 0..3), n).prop_map(|mut adj| {
                for a in &mut adj {
                    a.sort_unstable();
                    a.dedup();
                }
                adj
            })
        })
    }

    proptest! {
        #[test]
        fn dfs_and_kahn_agree(adj in random_graph()) {
            let cyc = dfs_cycle(&adj);
            prop_assert_eq!(cyc.is_none(), kahn_order(&adj).is_ok());
            if let Some(c) = cyc {
                prop_assert_eq!(c.first(), c.last());
                for w in c.windows(2) {
                    prop_assert!(adj[w[0]].contains(&w[1]));
                }
            }
        }
    }
}
