use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CommitDag, GraphError};
use crate::ids::CommitId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub out_degree: usize,
    /// Longest-path depth from any root; roots are level 0.
    pub topo_level: usize,
    /// Size of the reachable set, excluding the node itself.
    pub descendant_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopoMetrics(pub BTreeMap<CommitId, NodeMetrics>);

impl TopoMetrics {
    pub fn get(&self, id: &CommitId) -> Option<&NodeMetrics> {
        self.0.get(id)
    }
}

/// Kahn order over index adjacency, or the first node left on a cycle.
pub(crate) fn kahn_order(adj: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    kahn_order_by(adj, |i| i)
}

/// Kahn order picking the ready node with the smallest `key` first.
pub(crate) fn kahn_order_by<K: Ord>(adj: &[Vec<usize>], key: impl Fn(usize) -> K) -> Result<Vec<usize>, usize> {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for outs in adj {
        for &t in outs {
            indeg[t] += 1;
        }
    }
    let mut ready: std::collections::BTreeSet<(K, usize)> =
        (0..n).filter(|&i| indeg[i] == 0).map(|i| (key(i), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some((_, u)) = ready.pop_first() {
        order.push(u);
        for &t in &adj[u] {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.insert((key(t), t));
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&i| indeg[i] > 0).expect("some node kept indegree"))
    }
}

/// Descendant bitsets (excluding self), given a topological order.
pub(crate) fn reach_bits(adj: &[Vec<usize>], order: &[usize]) -> Vec<Vec<u64>> {
    let n = adj.len();
    let words = n.div_ceil(64);
    let mut reach = vec![vec![0u64; words]; n];
    for &u in order.iter().rev() {
        let mut acc = vec![0u64; words];
        for &t in &adj[u] {
            acc[t / 64] |= 1 << (t % 64);
            for (a, r) in acc.iter_mut().zip(&reach[t]) {
                *a |= r;
            }
        }
        reach[u] = acc;
    }
    reach
}

pub fn topo_metrics(dag: &CommitDag) -> Result<TopoMetrics, GraphError> {
    let adj = dag.adjacency()?;
    let n = adj.len();
    let order = kahn_order(&adj).map_err(|i| GraphError::CycleDetected(dag.nodes[i].clone()))?;

    let mut level = vec![0usize; n];
    for &u in &order {
        for &t in &adj[u] {
            level[t] = level[t].max(level[u] + 1);
        }
    }

    let reach = reach_bits(adj.as_slice(), &order);

    Ok(TopoMetrics(
        (0..n)
            .map(|i| {
                (
                    dag.nodes[i].clone(),
                    NodeMetrics {
                        out_degree: adj[i].len(),
                        topo_level: level[i],
                        descendant_count: reach[i].iter().map(|w| w.count_ones() as usize).sum(),
                    },
                )
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::test_id;
    use proptest::prelude::*;

    fn nodes(n: u32) -> Vec<CommitId> {
        (1..=n).map(test_id).collect()
    }

    #[test]
    fn chain() {
        let dag = CommitDag::from_pairs(nodes(3), &[(0, 1), (1, 2)]);
        let m = topo_metrics(&dag).unwrap();
        let a = m.get(&test_id(1)).unwrap();
        assert_eq!((a.out_degree, a.topo_level, a.descendant_count), (1, 0, 2));
        assert_eq!(m.get(&test_id(2)).unwrap().topo_level, 1);
        assert_eq!(m.get(&test_id(3)).unwrap().topo_level, 2);
    }

    #[test]
    fn star() {
        let dag = CommitDag::from_pairs(nodes(4), &[(0, 1), (0, 2), (0, 3)]);
        let a = *topo_metrics(&dag).unwrap().get(&test_id(1)).unwrap();
        assert_eq!((a.out_degree, a.descendant_count), (3, 3));
    }

    #[test]
    fn cycle_rejected() {
        let dag = CommitDag::from_pairs(nodes(2), &[(0, 1), (1, 0)]);
        assert!(matches!(topo_metrics(&dag), Err(GraphError::CycleDetected(_))));
    }

    fn brute(n: usize, pairs: &[(usize, usize)]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for u in 0..n {
            let outs: std::collections::BTreeSet<usize> =
                pairs.iter().filter(|p| p.0 == u).map(|p| p.1).collect();
            let mut seen = vec![false; n];
            let mut stack = vec![u];
            while let Some(x) = stack.pop() {
                for &(f, t) in pairs {
                    if f == x && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            // longest path into u by exhaustive DFS over predecessors
            fn depth(u: usize, pairs: &[(usize, usize)]) -> usize {
                pairs
                    .iter()
                    .filter(|p| p.1 == u)
                    .map(|p| depth(p.0, pairs) + 1)
                    .max()
                    .unwrap_or(0)
            }
            out.push((outs.len(), depth(u, pairs), seen.iter().filter(|s| **s).count()));
        }
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force(edges in prop::collection::vec((0usize..12, 0usize..12), 0..30)) {
            let pairs: Vec<(usize, usize)> = edges
                .into_iter()
                .filter(|(a, b)| a < b)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let dag = CommitDag::from_pairs(nodes(12), &pairs);
            let m = topo_metrics(&dag).unwrap();
            for (i, (out, lvl, desc)) in brute(12, &pairs).into_iter().enumerate() {
                let got = m.get(&dag.nodes[i]).unwrap();
                prop_assert_eq!((got.out_degree, got.topo_level, got.descendant_count), (out, lvl, desc));
                prop_assert!(got.descendant_count >= got.out_degree);
            }
            for &(f, t) in &pairs {
                prop_assert!(m.get(&dag.nodes[t]).unwrap().topo_level > m.get(&dag.nodes[f]).unwrap().topo_level);
            }
        }
    }
}
