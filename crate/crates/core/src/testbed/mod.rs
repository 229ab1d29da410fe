//! Milestone replay: linearize the milestone DAG, cherry-pick each
//! milestone's commits onto a scratch clone, and classify test transitions
//! between every START and END state.

mod runner;
mod transitions;

pub use runner::{
    parse_protocol, CommandRunner, DeclarativeRunner, RunnerError, ScriptedRunner, Status,
    TestRunner, STATE_LABEL_FILE,
};
pub use transitions::{
    classify, classify_runs, collect_transitions, extract_test_names, name_matches,
    test_name_patterns, Transition, TestTransitionReport,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::kahn_order_by;
use crate::history::{CommitRange, PathFilter};
use crate::ids::CommitId;
use crate::milestone::MilestoneDag;
use crate::par::Exec;
use crate::tree::{FileTree, Patch};
use crate::vcs::{GitRepo, VcsAdapter, VcsError};

#[derive(Debug, thiserror::Error)]
pub enum TestbedError {
    #[error("milestone graph has a cycle through {0}")]
    CycleDetected(String),
    #[error("{milestone}: commit {commit} conflicts on {paths:?}")]
    PatchConflict { milestone: String, commit: CommitId, paths: Vec<String> },
    #[error("unknown milestone {0}")]
    UnknownMilestone(String),
    #[error("k_runs must be within 3..=5, got {0}")]
    KRuns(usize),
    #[error(transparent)]
    Vcs(#[from] VcsError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneState {
    pub milestone_id: String,
    pub phase: Phase,
    /// Git tree id of the working tree.
    pub tree_id: String,
    /// Milestone commits applied so far, in replay order.
    pub applied_commits: Vec<CommitId>,
}

/// Topological order of milestones, earliest median commit time first, then
/// by id.
pub fn plan_linearization(mdag: &MilestoneDag, range: &CommitRange) -> Result<Vec<String>, TestbedError> {
    let ts: HashMap<&CommitId, i64> = range.commits.iter().map(|c| (&c.id, c.timestamp)).collect();
    let medians: Vec<i64> = mdag
        .milestones
        .iter()
        .map(|m| crate::milestone::lower_median(m.commits.iter().filter_map(|c| ts.get(c).copied()).collect()))
        .collect();
    let ms = &mdag.milestones;
    kahn_order_by(&mdag.adjacency(), |i| (medians[i], ms[i].id.clone()))
        .map(|o| o.into_iter().map(|i| ms[i].id.clone()).collect())
        .map_err(|i| TestbedError::CycleDetected(ms[i].id.clone()))
}

/// The result of replaying milestones in a chosen order.
///
/// Trees are stored once: the state before the first milestone plus one
/// gold patch (START to END) per milestone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub order: Vec<String>,
    /// Filtered-out commits applied before the first milestone.
    pub prelude: Vec<CommitId>,
    /// Filtered-out commits replayed right after the surviving commit that
    /// preceded them on the mainline.
    pub carried: BTreeMap<CommitId, Vec<CommitId>>,
    pub states: Vec<MilestoneState>,
    pub initial_tree: FileTree,
    pub patches: BTreeMap<String, Patch>,
    pub final_tree_id: String,
    pub expected_tree_id: String,
}

impl Replay {
    /// Final END tree equals the end-of-range tree.
    pub fn fidelity(&self) -> bool {
        self.final_tree_id == self.expected_tree_id
    }

    /// START and END trees for each milestone, in replay order.
    pub fn trees(&self) -> Vec<(String, FileTree, FileTree)> {
        let mut cur = self.initial_tree.clone();
        self.order
            .iter()
            .map(|id| {
                let start = cur.clone();
                cur.apply(&self.patches[id]);
                (id.clone(), start, cur.clone())
            })
            .collect()
    }

    pub fn state(&self, milestone: &str, phase: Phase) -> Option<&MilestoneState> {
        self.states.iter().find(|s| s.milestone_id == milestone && s.phase == phase)
    }
}

/// Cherry-picks milestone commits in `order` onto the range base.
pub fn materialize_states(
    order: &[String],
    mdag: &MilestoneDag,
    range: &CommitRange,
    repo: &GitRepo,
) -> Result<Replay, TestbedError> {
    let mainline = repo.first_parent_log(&range.base, &range.head)?;
    let surviving: std::collections::HashSet<&CommitId> = range.commits.iter().map(|c| &c.id).collect();
    let mut prelude = Vec::new();
    let mut carried: BTreeMap<CommitId, Vec<CommitId>> = BTreeMap::new();
    let mut owner: Option<&CommitId> = None;
    for id in &mainline {
        if surviving.contains(id) {
            owner = Some(id);
        } else {
            match owner {
                Some(o) => carried.entry(o.clone()).or_default().push(id.clone()),
                None => prelude.push(id.clone()),
            }
        }
    }

    let replay = repo.replay_from(&range.base)?;
    let merges: HashMap<&CommitId, bool> = range.commits.iter().map(|c| (&c.id, c.is_merge())).collect();
    let pick = |id: &CommitId, milestone: &str| -> Result<(), TestbedError> {
        let is_merge = match merges.get(id) {
            Some(&m) => m,
            None => repo.commit(id)?.is_merge(),
        };
        replay.pick(id, is_merge)?.map_err(|paths| TestbedError::PatchConflict {
            milestone: milestone.to_string(),
            commit: id.clone(),
            paths,
        })
    };
    for id in &prelude {
        pick(id, "prelude")?;
    }
    let initial_tree = replay.read_tree("HEAD")?;

    let mut states = Vec::with_capacity(2 * order.len());
    let mut patches = BTreeMap::new();
    let mut applied: Vec<CommitId> = Vec::new();
    let mut before = initial_tree.clone();
    for mid in order {
        let m = mdag.get(mid).ok_or_else(|| TestbedError::UnknownMilestone(mid.clone()))?;
        states.push(MilestoneState {
            milestone_id: mid.clone(),
            phase: Phase::Start,
            tree_id: replay.head_tree()?,
            applied_commits: applied.clone(),
        });
        for c in &m.commits {
            pick(c, mid)?;
            for extra in carried.get(c).into_iter().flatten() {
                pick(extra, mid)?;
            }
            applied.push(c.clone());
        }
        let after = replay.read_tree("HEAD")?;
        patches.insert(mid.clone(), before.diff(&after));
        before = after;
        states.push(MilestoneState {
            milestone_id: mid.clone(),
            phase: Phase::End,
            tree_id: replay.head_tree()?,
            applied_commits: applied.clone(),
        });
    }
    Ok(Replay {
        order: order.to_vec(),
        prelude,
        carried,
        states,
        initial_tree,
        patches,
        final_tree_id: replay.head_tree()?,
        expected_tree_id: repo.tree_id(range.head.as_str())?,
    })
}

/// Collects transition reports for every milestone of a replay.
///
/// Milestones run in parallel under [`Exec::Parallel`]; each report also
/// carries the test names statically declared by the milestone's patch to
/// test files.
pub fn run_testbed(
    replay: &Replay,
    runner: &dyn TestRunner,
    k_runs: usize,
    filter: &PathFilter,
    exec: Exec,
) -> Result<Vec<TestTransitionReport>, TestbedError> {
    let trees = replay.trees();
    exec.map(&trees, |(id, start, end)| {
        let mut report = collect_transitions(id, start, end, runner, k_runs)?;
        let test_paths = replay.patches[id].paths().filter(|p| filter.is_test(p));
        report.extracted = extract_test_names(start, end, test_paths);
        Ok(report)
    })
    .into_iter()
    .collect()
}
