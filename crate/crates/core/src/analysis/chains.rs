use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harness::EvaluationLog;
use crate::testbed::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "P0_root")]
    P0Root,
    #[serde(rename = "P0_induced")]
    P0Induced,
    #[serde(rename = "P1_inherited")]
    P1Inherited,
    #[serde(rename = "PX_missing")]
    PxMissing,
    #[serde(rename = "PH_healed")]
    PhHealed,
}

impl EventKind {
    pub const ALL: [EventKind; 5] = [
        EventKind::P0Root,
        EventKind::P0Induced,
        EventKind::P1Inherited,
        EventKind::PxMissing,
        EventKind::PhHealed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::P0Root => "P0_root",
            EventKind::P0Induced => "P0_induced",
            EventKind::P1Inherited => "P1_inherited",
            EventKind::PxMissing => "PX_missing",
            EventKind::PhHealed => "PH_healed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainEvent {
    pub milestone_id: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorChain {
    pub test_id: String,
    pub origin_milestone: String,
    pub events: Vec<ChainEvent>,
    pub healed: bool,
}

/// Per-test status timelines in log order.
pub fn timelines(log: &EvaluationLog) -> BTreeMap<&str, Vec<Status>> {
    let mut out: BTreeMap<&str, Vec<Status>> = BTreeMap::new();
    for (i, r) in log.records.iter().enumerate() {
        for (t, s) in &r.outcomes {
            let tl = out.entry(t.as_str()).or_default();
            tl.resize(i, Status::Missing);
            tl.push(*s);
        }
    }
    let n = log.records.len();
    for tl in out.values_mut() {
        tl.resize(n, Status::Missing);
    }
    out
}

/// Follows every test through the log.
///
/// A chain opens when a test fails or errors and its last observed
/// (non-missing) status was a pass. Each later milestone adds `PH_healed`
/// on a pass (closing the chain), `P1_inherited` on a failure, or
/// `PX_missing` when the test was not collected; a healed test may open a
/// new chain. `in_scope(milestone, test)` decides whether the opening event
/// is `P0_root` or `P0_induced`.
pub fn build_error_chains(log: &EvaluationLog, in_scope: &dyn Fn(&str, &str) -> bool) -> Vec<ErrorChain> {
    let ids: Vec<&str> = log.records.iter().map(|r| r.milestone_id.as_str()).collect();
    let mut chains = Vec::new();
    for (test, tl) in timelines(log) {
        let mut last_seen: Option<Status> = None;
        let mut open: Option<ErrorChain> = None;
        for (i, &s) in tl.iter().enumerate() {
            let m = ids[i];
            if let Some(chain) = open.as_mut() {
                let kind = match s {
                    Status::Pass => EventKind::PhHealed,
                    Status::Missing => EventKind::PxMissing,
                    _ => EventKind::P1Inherited,
                };
                chain.events.push(ChainEvent { milestone_id: m.to_string(), kind });
                if kind == EventKind::PhHealed {
                    let mut done = open.take().expect("chain is open");
                    done.healed = true;
                    chains.push(done);
                }
            } else if s.is_failing() && last_seen == Some(Status::Pass) {
                let kind = if in_scope(m, test) { EventKind::P0Root } else { EventKind::P0Induced };
                open = Some(ErrorChain {
                    test_id: test.to_string(),
                    origin_milestone: m.to_string(),
                    events: vec![ChainEvent { milestone_id: m.to_string(), kind }],
                    healed: false,
                });
            }
            if s != Status::Missing {
                last_seen = Some(s);
            }
        }
        chains.extend(open);
    }
    chains
}

/// Tests per milestone that are failing or missing, passed at some earlier
/// milestone, and have failed since their most recent pass.
pub fn raw_failure_counts(log: &EvaluationLog) -> BTreeMap<String, u64> {
    let tls = timelines(log);
    log.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let n = tls
                .values()
                .filter(|tl| {
                    if tl[i] == Status::Pass {
                        return false;
                    }
                    let Some(last_pass) = (0..i).rev().find(|&j| tl[j] == Status::Pass) else { return false };
                    (last_pass + 1..=i).any(|k| tl[k].is_failing())
                })
                .count();
            (r.milestone_id.clone(), n as u64)
        })
        .collect()
}

/// Non-healing chain events per milestone.
pub fn chain_event_counts(chains: &[ErrorChain]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for e in chains.iter().flat_map(|c| &c.events).filter(|e| e.kind != EventKind::PhHealed) {
        *out.entry(e.milestone_id.clone()).or_default() += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationHistogram {
    pub bins: usize,
    /// Event counts per bin, in [`EventKind::ALL`] order.
    pub counts: Vec<[u64; 5]>,
    /// Counts normalised per bin; all zero for an empty bin.
    pub proportions: Vec<[f64; 5]>,
}

/// Buckets events by the progress fraction `i / n` of their milestone in
/// `order` into `bins` equal bins.
pub fn propagation_histogram(chains: &[ErrorChain], order: &[String], bins: usize) -> PropagationHistogram {
    let bins = bins.max(1);
    let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, m)| (m.as_str(), i)).collect();
    let n = order.len().max(1);
    let mut counts = vec![[0u64; 5]; bins];
    for e in chains.iter().flat_map(|c| &c.events) {
        let Some(&i) = pos.get(e.milestone_id.as_str()) else { continue };
        let bin = (i * bins / n).min(bins - 1);
        let k = EventKind::ALL.iter().position(|x| *x == e.kind).expect("known kind");
        counts[bin][k] += 1;
    }
    let proportions = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            let mut p = [0.0; 5];
            if total > 0 {
                for (k, v) in row.iter().enumerate() {
                    p[k] = *v as f64 / total as f64;
                }
            }
            p
        })
        .collect();
    PropagationHistogram { bins, counts, proportions }
}
