use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::runner::{RunnerError, Status, TestRunner};
use super::TestbedError;
use crate::tree::FileTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Transition {
    F2P,
    P2P,
    N2P,
    P2F,
}

/// Classifies one stable status pair. Errors count as failures.
pub fn classify(start: Status, end: Status) -> Option<Transition> {
    match (start, end) {
        (s, Status::Pass) if s.is_failing() => Some(Transition::F2P),
        (Status::Pass, Status::Pass) => Some(Transition::P2P),
        (Status::Missing, Status::Pass) => Some(Transition::N2P),
        (Status::Pass, e) if e.is_failing() => Some(Transition::P2F),
        _ => None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestTransitionReport {
    pub milestone_id: String,
    pub f2p: BTreeSet<String>,
    pub p2p: BTreeSet<String>,
    pub n2p: BTreeSet<String>,
    pub p2f: BTreeSet<String>,
    pub flaky: BTreeSet<String>,
    pub runs_per_state: usize,
    /// Union of ids collected at either state.
    pub collected: BTreeSet<String>,
    /// Observed non-missing outcomes, and how many of them were `error`.
    pub outcomes: u64,
    pub error_outcomes: u64,
    /// Test names statically extracted from the milestone's test diff, by
    /// pattern name.
    #[serde(default)]
    pub extracted: BTreeMap<String, BTreeSet<String>>,
}

impl TestTransitionReport {
    /// Tests a solution must make pass.
    pub fn required(&self) -> BTreeSet<&str> {
        self.f2p.iter().chain(&self.n2p).map(String::as_str).collect()
    }

    pub fn transitions(&self) -> usize {
        self.f2p.len() + self.p2p.len() + self.n2p.len() + self.p2f.len()
    }
}

fn status_in(run: &BTreeMap<String, Status>, t: &str) -> Status {
    run.get(t).copied().unwrap_or(Status::Missing)
}

/// Classifies tests from `k` runs of each state. A test whose status is not
/// constant across the runs of either state is flaky; the rest are
/// classified by their stable pair.
pub fn classify_runs(
    milestone_id: &str,
    collected: &BTreeSet<String>,
    start_runs: &[BTreeMap<String, Status>],
    end_runs: &[BTreeMap<String, Status>],
) -> TestTransitionReport {
    let mut r = TestTransitionReport {
        milestone_id: milestone_id.to_string(),
        runs_per_state: start_runs.len().max(end_runs.len()),
        collected: collected.clone(),
        ..Default::default()
    };
    let stable = |runs: &[BTreeMap<String, Status>], t: &str| -> Option<Status> {
        let first = runs.first().map_or(Status::Missing, |r| status_in(r, t));
        runs.iter().all(|r| status_in(r, t) == first).then_some(first)
    };
    for run in start_runs.iter().chain(end_runs) {
        for st in run.values().filter(|s| **s != Status::Missing) {
            r.outcomes += 1;
            r.error_outcomes += u64::from(*st == Status::Error);
        }
    }
    for t in collected {
        let (Some(s), Some(e)) = (stable(start_runs, t), stable(end_runs, t)) else {
            r.flaky.insert(t.clone());
            continue;
        };
        let set = match classify(s, e) {
            Some(Transition::F2P) => &mut r.f2p,
            Some(Transition::P2P) => &mut r.p2p,
            Some(Transition::N2P) => &mut r.n2p,
            Some(Transition::P2F) => &mut r.p2f,
            None => continue,
        };
        set.insert(t.clone());
    }
    r
}

type StateRuns = (BTreeSet<String>, Vec<BTreeMap<String, Status>>);

fn run_state(runner: &dyn TestRunner, tree: &FileTree, k: usize) -> Result<StateRuns, RunnerError> {
    let ids = runner.collect(tree)?;
    let runs = (0..k).map(|a| runner.run(tree, &ids, a)).collect::<Result<_, _>>()?;
    Ok((ids, runs))
}

/// Runs both states `k_runs` times and classifies transitions.
pub fn collect_transitions(
    milestone_id: &str,
    start: &FileTree,
    end: &FileTree,
    runner: &dyn TestRunner,
    k_runs: usize,
) -> Result<TestTransitionReport, TestbedError> {
    if !(3..=5).contains(&k_runs) {
        return Err(TestbedError::KRuns(k_runs));
    }
    let (start_ids, start_runs) = run_state(runner, start, k_runs)?;
    let (end_ids, end_runs) = run_state(runner, end, k_runs)?;
    let collected = start_ids.union(&end_ids).cloned().collect();
    Ok(classify_runs(milestone_id, &collected, &start_runs, &end_runs))
}

/// Per-language patterns for test names declared in source.
pub fn test_name_patterns() -> &'static [(&'static str, Regex)] {
    static P: OnceLock<Vec<(&'static str, Regex)>> = OnceLock::new();
    P.get_or_init(|| {
        [
            ("check", r"(?m)^test\s+(\S+)"),
            ("rust", r"#\[(?:tokio::)?test\][\s\S]{0,80}?fn\s+(\w+)"),
            ("python", r"(?m)^\s*(?:async\s+)?def\s+(test_\w+)"),
            ("go", r"(?m)^func\s+(Test\w+)\s*\("),
            ("js", r#"\b(?:it|test)\(\s*['"]([^'"]+)['"]"#),
        ]
        .into_iter()
        .map(|(n, p)| (n, Regex::new(p).unwrap()))
        .collect()
    })
}

fn names(re: &Regex, text: &str) -> BTreeSet<String> {
    re.captures_iter(text).map(|c| c[1].to_string()).collect()
}

/// Test names declared in `end` but not in `start`, over the given paths.
pub fn extract_test_names<'p>(
    start: &FileTree,
    end: &FileTree,
    paths: impl IntoIterator<Item = &'p str>,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for p in paths {
        let Some(new) = end.get_text(p) else { continue };
        let old = start.get_text(p).unwrap_or("");
        for (name, re) in test_name_patterns() {
            let added: BTreeSet<String> = names(re, new).difference(&names(re, old)).cloned().collect();
            if !added.is_empty() {
                out.entry(name.to_string()).or_default().extend(added);
            }
        }
    }
    out
}

/// Whether a statically extracted name matches a collected id.
pub fn name_matches(name: &str, id: &str) -> bool {
    id == name
        || id.strip_suffix(name).is_some_and(|rest| rest.ends_with("::") || rest.ends_with('.') || rest.ends_with('/'))
}
