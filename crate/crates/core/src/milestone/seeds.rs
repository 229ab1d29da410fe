use std::collections::BTreeSet;

use super::judge::jaccard;
use super::{BuildInputs, BuilderConfig, SeedFeatures, SemanticJudge};
use crate::graph::{kahn_order, reach_bits};
use crate::ids::CommitId;

fn range_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Picks up to `max_seeds` commits that anchor milestones.
///
/// Candidates are commits with at least one dependent that are local maxima
/// of the judge's seed score over their DAG neighbourhood; an edgeless DAG
/// yields its single best-scoring commit. They are accepted greedily by score while their
/// subgraph (self plus descendants) overlaps every accepted seed's subgraph
/// by less than `seed_jaccard`. Returned in chronological order.
pub fn discover_seeds(inputs: &BuildInputs<'_>, judge: &dyn SemanticJudge, cfg: &BuilderConfig) -> Vec<CommitId> {
    let dag = inputs.dag;
    let n = dag.nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let adj = dag.adjacency().expect("commit DAG references known nodes");
    let order = kahn_order(&adj).expect("commit DAG is acyclic");
    let reach = reach_bits(&adj, &order);

    let metric = |f: fn(&crate::graph::NodeMetrics) -> usize| -> Vec<f64> {
        dag.nodes
            .iter()
            .map(|id| inputs.metrics.get(id).map(f).unwrap_or(0) as f64)
            .collect()
    };
    let out = range_normalize(&metric(|m| m.out_degree));
    let desc = range_normalize(&metric(|m| m.descendant_count));
    let level = range_normalize(&metric(|m| m.topo_level));
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            judge.is_seed(
                inputs.commit(&dag.nodes[i]),
                &SeedFeatures {
                    out_degree: out[i],
                    descendant_count: desc[i],
                    topo_level: level[i],
                },
            )
        })
        .collect();

    let mut neighbours = vec![Vec::new(); n];
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            neighbours[u].push(v);
            neighbours[v].push(u);
        }
    }
    // isolated commits are trivially local maxima but anchor nothing
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| !adj[i].is_empty())
        .filter(|&i| neighbours[i].iter().all(|&j| scores[i] >= scores[j]))
        .collect();
    if candidates.is_empty() {
        candidates = (0..n).collect();
    }
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    if adj.iter().all(Vec::is_empty) {
        candidates.truncate(1);
    }

    let subgraph = |i: usize| -> BTreeSet<usize> {
        let mut s: BTreeSet<usize> = (0..n).filter(|&j| reach[i][j / 64] >> (j % 64) & 1 == 1).collect();
        s.insert(i);
        s
    };
    let mut accepted: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    for c in candidates {
        if accepted.len() >= cfg.max_seeds {
            break;
        }
        let sg = subgraph(c);
        if accepted.iter().all(|(_, s)| jaccard(s, &sg) < cfg.seed_jaccard) {
            accepted.push((c, sg));
        }
    }
    let mut idx: Vec<usize> = accepted.into_iter().map(|(i, _)| i).collect();
    idx.sort_unstable();
    idx.into_iter().map(|i| dag.nodes[i].clone()).collect()
}
