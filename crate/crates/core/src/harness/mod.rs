//! Continuous-evolution evaluation: dependency-driven task unlocking, a
//! persistent workspace, snapshot scoring, and the stateless baseline.

mod solver;

pub use solver::{
    apply_gold, test_covers, CommandSolver, FaultSolver, GoldSolver, SolveOutcome, Solver,
    SolverError, TaskContext, TaskSpec,
};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::{from_json_lines, to_json_lines};
use crate::history::PathFilter;
use crate::milestone::MilestoneDag;
use crate::par::Exec;
use crate::testbed::{Replay, RunnerError, Status, TestRunner, TestTransitionReport};
use crate::tree::FileTree;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("graded milestone {0} has no required tests")]
    ZeroRequired(String),
    #[error("invalid counts: fixed {n_fixed} exceeds required {n_required}")]
    InvalidCounts { n_required: u64, n_fixed: u64 },
    #[error("no transition report for milestone {0}")]
    MissingReport(String),
    #[error("milestone {0} is not part of the replay")]
    UnknownMilestone(String),
    #[error("snapshot failed: {0}")]
    SnapshotFailure(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilestoneResult {
    pub milestone_id: String,
    pub n_required: u64,
    pub n_fixed: u64,
    pub n_broken: u64,
    pub recall: f64,
    pub precision: f64,
    pub score: f64,
    pub resolved: bool,
}

/// Recall, smoothed precision and their harmonic mean.
///
/// `recall = fixed / required`, `precision = (fixed + 1) / (fixed + broken + 1)`,
/// `score = 2rp / (r + p)` (0 when both are 0). Resolved means every
/// required test passes and nothing broke.
pub fn score_milestone(milestone_id: &str, n_required: u64, n_fixed: u64, n_broken: u64) -> Result<MilestoneResult, HarnessError> {
    if n_required == 0 {
        return Err(HarnessError::ZeroRequired(milestone_id.to_string()));
    }
    if n_fixed > n_required {
        return Err(HarnessError::InvalidCounts { n_required, n_fixed });
    }
    let recall = n_fixed as f64 / n_required as f64;
    let precision = (n_fixed + 1) as f64 / (n_fixed + n_broken + 1) as f64;
    let score = if recall + precision == 0.0 { 0.0 } else { 2.0 * recall * precision / (recall + precision) };
    Ok(MilestoneResult {
        milestone_id: milestone_id.to_string(),
        n_required,
        n_fixed,
        n_broken,
        recall,
        precision,
        score,
        resolved: n_fixed == n_required && n_broken == 0,
    })
}

/// Graded milestones not yet completed whose graded prerequisites are all
/// completed. Ungraded milestones never gate anything; their bypass edges
/// carry the ordering.
pub fn unlock_frontier(mdag: &MilestoneDag, completed: &BTreeSet<String>) -> BTreeSet<String> {
    let graded: BTreeSet<&str> = mdag.milestones.iter().filter(|m| m.graded).map(|m| m.id.as_str()).collect();
    let prereqs = mdag.prerequisites();
    graded
        .iter()
        .filter(|m| !completed.contains(**m))
        .filter(|m| {
            prereqs
                .get(**m)
                .into_iter()
                .flatten()
                .all(|p| !graded.contains(p) || completed.contains(*p))
        })
        .map(|m| m.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Continuous,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub mode: Mode,
    pub milestone_id: String,
    /// Content hash of the evaluated workspace snapshot.
    pub snapshot: String,
    pub timed_out: bool,
    /// Status of every non-flaky test known to the testbed.
    pub outcomes: BTreeMap<String, Status>,
    pub result: MilestoneResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationLog {
    pub mode: Mode,
    pub records: Vec<EvalRecord>,
}

impl EvaluationLog {
    pub fn to_jsonl(&self) -> String {
        to_json_lines(&self.records)
    }

    pub fn from_jsonl(mode: Mode, text: &str) -> Result<Self, serde_json::Error> {
        Ok(EvaluationLog { mode, records: from_json_lines(text)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub milestones: usize,
    pub mean_score: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub resolve_rate: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Per-log means; `None` for an empty log.
pub fn aggregate(log: &EvaluationLog) -> Aggregate {
    let rs = || log.records.iter().map(|r| &r.result);
    Aggregate {
        milestones: log.records.len(),
        mean_score: mean(rs().map(|r| r.score)),
        mean_precision: mean(rs().map(|r| r.precision)),
        mean_recall: mean(rs().map(|r| r.recall)),
        resolve_rate: mean(rs().map(|r| if r.resolved { 1.0 } else { 0.0 })),
    }
}

/// Mean of per-repository means, skipping repositories without data.
pub fn macro_average(per_repo: &[Aggregate]) -> Aggregate {
    let field = |f: fn(&Aggregate) -> Option<f64>| mean(per_repo.iter().filter_map(f));
    Aggregate {
        milestones: per_repo.iter().map(|a| a.milestones).sum(),
        mean_score: field(|a| a.mean_score),
        mean_precision: field(|a| a.mean_precision),
        mean_recall: field(|a| a.mean_recall),
        resolve_rate: field(|a| a.resolve_rate),
    }
}

/// Everything an evaluation run reads.
pub struct Harness<'a> {
    pub mdag: &'a MilestoneDag,
    pub replay: &'a Replay,
    pub reports: &'a [TestTransitionReport],
    pub runner: &'a dyn TestRunner,
    pub filter: &'a PathFilter,
}

struct Prepared<'a> {
    trees: BTreeMap<String, (FileTree, FileTree)>,
    reports: BTreeMap<&'a str, &'a TestTransitionReport>,
    universe: BTreeSet<String>,
}

impl<'a> Harness<'a> {
    fn prepare(&self) -> Result<Prepared<'a>, HarnessError> {
        let trees = self
            .replay
            .trees()
            .into_iter()
            .map(|(id, s, e)| (id, (s, e)))
            .collect::<BTreeMap<_, _>>();
        let reports: BTreeMap<&str, &TestTransitionReport> =
            self.reports.iter().map(|r| (r.milestone_id.as_str(), r)).collect();
        for m in self.mdag.milestones.iter().filter(|m| m.graded) {
            if !trees.contains_key(&m.id) {
                return Err(HarnessError::UnknownMilestone(m.id.clone()));
            }
            let r = reports.get(m.id.as_str()).ok_or_else(|| HarnessError::MissingReport(m.id.clone()))?;
            if r.required().is_empty() {
                return Err(HarnessError::ZeroRequired(m.id.clone()));
            }
        }
        let flaky: BTreeSet<&String> = self.reports.iter().flat_map(|r| &r.flaky).collect();
        let universe = self
            .reports
            .iter()
            .flat_map(|r| &r.collected)
            .filter(|t| !flaky.contains(t))
            .cloned()
            .collect();
        Ok(Prepared { trees, reports, universe })
    }

    fn task(&self, id: &str, report: &TestTransitionReport) -> TaskSpec {
        let m = self.mdag.get(id).expect("graded milestone exists");
        let required: Vec<&str> = report.required().into_iter().collect();
        TaskSpec {
            milestone_id: id.to_string(),
            title: m.title.clone(),
            requirements_text: format!("{}\nTests that must pass: {}", m.title, required.join(", ")),
            workspace_path: None,
        }
    }

    fn context<'p>(&'p self, p: &'p Prepared<'a>, id: &str, dispatch_index: usize) -> TaskContext<'p> {
        let (start, end) = &p.trees[id];
        TaskContext {
            initial: &self.replay.initial_tree,
            start,
            end,
            gold: &self.replay.patches[id],
            p2p: &p.reports[id].p2p,
            dispatch_index,
        }
    }

    /// Runs every known test on `snapshot`, with test files replaced by
    /// those of the milestone's END state, and scores the milestone.
    fn evaluate(&self, p: &Prepared<'a>, id: &str, snapshot: &FileTree, timed_out: bool, mode: Mode) -> Result<EvalRecord, HarnessError> {
        let (_, end) = &p.trees[id];
        let mut tree = snapshot.clone();
        let stale: Vec<String> = tree.paths().filter(|x| self.filter.is_test(x)).map(str::to_string).collect();
        for x in stale {
            tree.remove(&x);
        }
        for x in end.paths().filter(|x| self.filter.is_test(x)) {
            tree.insert(x, end.get(x).expect("listed path").clone());
        }
        let collected: BTreeSet<String> = self.runner.collect(&tree)?.intersection(&p.universe).cloned().collect();
        let ran = self.runner.run(&tree, &collected, 0)?;
        let outcomes: BTreeMap<String, Status> = p
            .universe
            .iter()
            .map(|t| (t.clone(), ran.get(t).copied().unwrap_or(Status::Missing)))
            .collect();
        let report = p.reports[id];
        let required = report.required();
        let fixed = if timed_out {
            0
        } else {
            required.iter().filter(|t| outcomes.get(**t) == Some(&Status::Pass)).count() as u64
        };
        let broken = report.p2p.iter().filter(|t| outcomes.get(*t) != Some(&Status::Pass)).count() as u64;
        Ok(EvalRecord {
            mode,
            milestone_id: id.to_string(),
            snapshot: snapshot.content_hash(),
            timed_out,
            outcomes,
            result: score_milestone(id, required.len() as u64, fixed, broken)?,
        })
    }

    /// One persistent workspace. Tasks are dispatched lowest id first as
    /// they unlock and are marked completed whatever their score. Ungraded
    /// milestones that precede a dispatched one in the replay order are
    /// applied from gold first. Snapshots are scored after solving, in
    /// parallel under [`Exec::Parallel`].
    pub fn run_continuous(&self, solver: &dyn Solver, exec: Exec) -> Result<EvaluationLog, HarnessError> {
        let p = self.prepare()?;
        let mut ws = self.replay.initial_tree.clone();
        let mut completed = BTreeSet::new();
        let mut applied = BTreeSet::new();
        let mut snapshots = Vec::new();
        while let Some(id) = unlock_frontier(self.mdag, &completed).into_iter().next() {
            let pos = self.replay.order.iter().position(|x| *x == id).expect("checked in prepare");
            for u in &self.replay.order[..pos] {
                let ungraded = self.mdag.get(u).is_some_and(|m| !m.graded);
                if ungraded && applied.insert(u.clone()) {
                    let (s, e) = &p.trees[u];
                    apply_gold(&mut ws, s, e, &self.replay.patches[u]);
                }
            }
            let task = self.task(&id, p.reports[id.as_str()]);
            let outcome = solver.solve(&task, &self.context(&p, &id, snapshots.len()), &mut ws)?;
            snapshots.push((id.clone(), ws.clone(), outcome == SolveOutcome::TimedOut));
            completed.insert(id);
        }
        let records = exec
            .map(&snapshots, |(id, snap, t)| self.evaluate(&p, id, snap, *t, Mode::Continuous))
            .into_iter()
            .collect::<Result<_, _>>()?;
        Ok(EvaluationLog { mode: Mode::Continuous, records })
    }

    /// Each graded milestone from its canonical START tree; nothing
    /// persists between tasks.
    pub fn run_independent(&self, solver: &dyn Solver, exec: Exec) -> Result<EvaluationLog, HarnessError> {
        let p = self.prepare()?;
        let ids: Vec<String> = self.mdag.milestones.iter().filter(|m| m.graded).map(|m| m.id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let records = exec
            .map_range(ids.len(), |i| {
                let id = &ids[i];
                let mut ws = p.trees[id].0.clone();
                let task = self.task(id, p.reports[id.as_str()]);
                let outcome = solver.solve(&task, &self.context(&p, id, i), &mut ws)?;
                self.evaluate(&p, id, &ws, outcome == SolveOutcome::TimedOut, Mode::Independent)
            })
            .into_iter()
            .collect::<Result<_, _>>()?;
        Ok(EvaluationLog { mode: Mode::Independent, records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milestone::{EdgeKind, Milestone, MilestoneEdge, Strength};
    use proptest::prelude::*;

    #[test]
    fn score_examples() {
        let r = score_milestone("M", 4, 2, 1).unwrap();
        assert_eq!((r.recall, r.precision), (0.5, 0.75));
        assert!((r.score - 0.6).abs() < 1e-15);
        let r = score_milestone("M", 3, 0, 0).unwrap();
        assert_eq!((r.recall, r.precision, r.score), (0.0, 1.0, 0.0));
        let r = score_milestone("M", 5, 5, 0).unwrap();
        assert!(r.resolved && r.score == 1.0);
        assert!(!score_milestone("M", 5, 5, 1).unwrap().resolved);
        assert!(matches!(score_milestone("M", 0, 0, 0), Err(HarnessError::ZeroRequired(_))));
    }

    fn dag() -> MilestoneDag {
        let m = |id: &str| Milestone { id: id.into(), title: String::new(), commits: vec![], tags: vec![], loc: 0, graded: true };
        let e = |a: &str, b: &str| MilestoneEdge { from: a.into(), to: b.into(), strength: Strength::Strong, kind: EdgeKind::Functional };
        MilestoneDag { milestones: vec![m("M1"), m("M2"), m("M3")], edges: vec![e("M1", "M3"), e("M2", "M3")] }
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn frontier_examples() {
        let d = dag();
        assert_eq!(unlock_frontier(&d, &set(&[])), set(&["M1", "M2"]));
        assert_eq!(unlock_frontier(&d, &set(&["M1"])), set(&["M2"]));
        assert_eq!(unlock_frontier(&d, &set(&["M1", "M2"])), set(&["M3"]));
    }

    #[test]
    fn aggregates() {
        let rec = |score: f64, resolved: bool| EvalRecord {
            mode: Mode::Continuous,
            milestone_id: String::new(),
            snapshot: String::new(),
            timed_out: false,
            outcomes: BTreeMap::new(),
            result: MilestoneResult { milestone_id: String::new(), n_required: 1, n_fixed: 0, n_broken: 0, recall: 0.0, precision: 1.0, score, resolved },
        };
        let log = EvaluationLog { mode: Mode::Continuous, records: vec![rec(1.0, true), rec(0.0, false), rec(0.0, false), rec(0.0, false)] };
        let a = aggregate(&log);
        assert_eq!((a.mean_score, a.resolve_rate), (Some(0.25), Some(0.25)));
        let empty = aggregate(&EvaluationLog { mode: Mode::Continuous, records: vec![] });
        assert_eq!(empty.mean_score, None);
        let two = EvaluationLog { mode: Mode::Continuous, records: vec![rec(1.0, true), rec(0.0, false)] };
        assert_eq!(aggregate(&two).mean_score, Some(0.5));
        let m = macro_average(&[a, aggregate(&two), empty]);
        assert_eq!(m.mean_score, Some(0.375));
        let text = log.to_jsonl();
        assert_eq!(EvaluationLog::from_jsonl(Mode::Continuous, &text).unwrap(), log);
    }

    proptest! {
        #[test]
        fn score_bounds(req in 1u64..50, fixed_frac in 0.0f64..=1.0, broken in 0u64..50) {
            let fixed = ((req as f64) * fixed_frac).floor() as u64;
            let r = score_milestone("M", req, fixed, broken).unwrap();
            let cap = (2.0 * r.recall * r.precision / (r.recall + r.precision).max(1e-300)).min(1.0);
            prop_assert!(r.score >= 0.0 && r.score <= cap + 1e-15);
            prop_assert_eq!(r.score == 0.0, r.recall == 0.0);
            prop_assert!(!r.resolved || (fixed == req && broken == 0));
        }

        #[test]
        fn frontier_monotone(n in 2usize..9, edges in prop::collection::vec((0usize..9, 0usize..9), 0..20), a in prop::collection::vec(any::<bool>(), 9), b in prop::collection::vec(any::<bool>(), 9)) {
            let ids: Vec<String> = (0..n).map(|i| format!("M{i}")).collect();
            let m = |id: &String| Milestone { id: id.clone(), title: String::new(), commits: vec![], tags: vec![], loc: 0, graded: true };
            let d = MilestoneDag {
                milestones: ids.iter().map(m).collect(),
                edges: edges.iter().filter(|(x, y)| x < y && *y < n).map(|&(x, y)| MilestoneEdge { from: ids[x].clone(), to: ids[y].clone(), strength: Strength::Strong, kind: EdgeKind::Functional }).collect(),
            };
            let c1: BTreeSet<String> = (0..n).filter(|&i| a[i]).map(|i| ids[i].clone()).collect();
            let c2: BTreeSet<String> = (0..n).filter(|&i| a[i] || b[i]).map(|i| ids[i].clone()).collect();
            let lhs: BTreeSet<String> = unlock_frontier(&d, &c1).union(&c1).cloned().collect();
            let rhs: BTreeSet<String> = unlock_frontier(&d, &c2).union(&c2).cloned().collect();
            prop_assert!(lhs.is_subset(&rhs));
        }
    }
}
