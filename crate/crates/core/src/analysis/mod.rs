//! Post-hoc analytics over evaluation logs and partitions.

mod chains;
mod fit;
mod partition;

pub use chains::{
    build_error_chains, chain_event_counts, propagation_histogram, raw_failure_counts, timelines,
    ChainEvent, ErrorChain, EventKind, PropagationHistogram,
};
pub use fit::{fit_saturation, fit_saturation_with, profile, rate_grid, FitError, SaturationFit};
pub use partition::{compare_partitions, Partition, PartitionComparison, PartitionError};

use std::collections::BTreeSet;

use crate::harness::{test_covers, EvaluationLog};
use crate::milestone::MilestoneDag;
use crate::testbed::{Replay, TestTransitionReport};

/// Default root-cause scope: the test is one of the milestone's F2P or P2P
/// tests and the milestone's gold patch touches a file the test covers.
pub fn change_scope<'a>(reports: &'a [TestTransitionReport], replay: &'a Replay) -> impl Fn(&str, &str) -> bool + 'a {
    move |milestone: &str, test: &str| {
        let Some(r) = reports.iter().find(|r| r.milestone_id == milestone) else { return false };
        if !r.f2p.contains(test) && !r.p2p.contains(test) {
            return false;
        }
        replay
            .patches
            .get(milestone)
            .is_some_and(|p| p.paths().any(|path| test_covers(test, path)))
    }
}

/// Cumulative score per dispatched milestone, as fit input.
pub fn cumulative_scores(log: &EvaluationLog) -> Vec<(f64, f64)> {
    let mut total = 0.0;
    log.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            total += r.result.score;
            ((i + 1) as f64, total)
        })
        .collect()
}

/// A milestone DAG as a partition of commit ids.
pub fn partition_of(mdag: &MilestoneDag) -> Partition {
    mdag.milestones
        .iter()
        .map(|m| (m.id.clone(), m.commits.iter().map(|c| c.as_str().to_string()).collect()))
        .collect()
}

/// Restricts both partitions to the items they share.
pub fn restrict_to_shared(a: &Partition, b: &Partition) -> (Partition, Partition) {
    let items = |p: &Partition| -> BTreeSet<String> { p.iter().flat_map(|(_, g)| g.iter().cloned()).collect() };
    let shared: BTreeSet<String> = items(a).intersection(&items(b)).cloned().collect();
    let keep = |p: &Partition| -> Partition {
        p.iter()
            .map(|(n, g)| (n.clone(), g.iter().filter(|x| shared.contains(*x)).cloned().collect()))
            .collect()
    };
    (keep(a), keep(b))
}

/// Histogram as CSV: `bin,from,to,<kind counts...>,<kind proportions...>`.
pub fn histogram_csv(h: &PropagationHistogram) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["bin".to_string(), "from".into(), "to".into()];
    header.extend(EventKind::ALL.iter().map(|k| format!("{}_count", k.name())));
    header.extend(EventKind::ALL.iter().map(|k| format!("{}_share", k.name())));
    w.write_record(&header).expect("in-memory write");
    for (i, (c, p)) in h.counts.iter().zip(&h.proportions).enumerate() {
        let mut row = vec![i.to_string(), format!("{}", i as f64 / h.bins as f64), format!("{}", (i + 1) as f64 / h.bins as f64)];
        row.extend(c.iter().map(u64::to_string));
        row.extend(p.iter().map(|x| format!("{x}")));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

/// Contingency table as CSV with row labels in the first column.
pub fn contingency_csv(c: &PartitionComparison) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(c.cols.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (label, row) in c.rows.iter().zip(&c.contingency) {
        let mut r = vec![label.clone()];
        r.extend(row.iter().map(u64::to_string));
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
