use std::collections::{BTreeMap, BTreeSet};

use super::judge::jaccard;
use super::{milestone_id, BuildInputs, BuilderConfig, Milestone, SemanticJudge, ThemeProfile};
use crate::graph::{kahn_order, reach_bits};
use crate::ids::CommitId;
use crate::par::Exec;

struct Group {
    members: Vec<CommitId>,
    profile: ThemeProfile,
}

/// Grows seed groups into a complete partition of the range.
///
/// Seeds whose subgraphs overlap by at least `seed_group_jaccard` start in
/// one group. Remaining commits are assigned, chronologically and over
/// repeated passes, to the group with the highest judge score (ties go to
/// the group with the earlier seed). Commits no group will take become
/// trailing chore milestones, one per connected component. Finally any
/// groups tied together by commit edges in both directions are merged so
/// the partition admits an acyclic milestone graph.
pub fn consolidate(
    seeds: &[CommitId],
    inputs: &BuildInputs<'_>,
    judge: &dyn SemanticJudge,
    cfg: &BuilderConfig,
    exec: Exec,
) -> Vec<Milestone> {
    let dag = inputs.dag;
    let n = dag.nodes.len();
    let adj = dag.adjacency().expect("commit DAG references known nodes");
    let order = kahn_order(&adj).expect("commit DAG is acyclic");
    let reach = reach_bits(&adj, &order);
    let idx = dag.index();
    let subgraph = |id: &CommitId| -> BTreeSet<usize> {
        let i = idx[id];
        let mut s: BTreeSet<usize> = (0..n).filter(|&j| reach[i][j / 64] >> (j % 64) & 1 == 1).collect();
        s.insert(i);
        s
    };

    // pre-group seeds by subgraph overlap
    let mut seeds: Vec<CommitId> = seeds.to_vec();
    inputs.sort_chronological(&mut seeds);
    let subgraphs: Vec<BTreeSet<usize>> = seeds.iter().map(subgraph).collect();
    let mut group_of: Vec<usize> = (0..seeds.len()).collect();
    for i in 0..seeds.len() {
        for j in 0..i {
            if jaccard(&subgraphs[i], &subgraphs[j]) >= cfg.seed_group_jaccard {
                let (gi, gj) = (group_of[i], group_of[j]);
                let keep = gi.min(gj);
                for g in group_of.iter_mut() {
                    if *g == gi || *g == gj {
                        *g = keep;
                    }
                }
            }
        }
    }
    let mut groups: Vec<Group> = Vec::new();
    let mut slot: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, seed) in seeds.iter().enumerate() {
        let g = *slot.entry(group_of[i]).or_insert_with(|| {
            groups.push(Group { members: Vec::new(), profile: ThemeProfile::default() });
            groups.len() - 1
        });
        groups[g].members.push(seed.clone());
        groups[g].profile.absorb(inputs.commit(seed));
    }

    let seeded: BTreeSet<&CommitId> = seeds.iter().collect();
    let mut pending: Vec<&CommitId> = dag.nodes.iter().filter(|c| !seeded.contains(c)).collect();
    loop {
        let mut assigned_any = false;
        let mut still = Vec::new();
        for c in pending {
            let commit = inputs.commit(c);
            let scores = exec.map(&groups, |g| judge.same_theme(commit, &g.profile));
            let best = scores
                .iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |acc, (i, &s)| match acc {
                    Some((_, bs)) if bs >= s => acc,
                    _ => Some((i, s)),
                });
            match best {
                Some((g, s)) if s > 0.0 => {
                    groups[g].members.push(c.clone());
                    groups[g].profile.absorb(commit);
                    assigned_any = true;
                }
                _ => still.push(c),
            }
        }
        pending = still;
        if !assigned_any || pending.is_empty() {
            break;
        }
    }

    let mut parts: Vec<(Vec<CommitId>, bool)> = groups.into_iter().map(|g| (g.members, false)).collect();

    // leftovers: one chore milestone per weakly connected component
    let left: BTreeSet<usize> = pending.iter().map(|c| idx[*c]).collect();
    let mut seen = BTreeSet::new();
    for &start in &left {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            let nbrs = adj[u]
                .iter()
                .copied()
                .chain((0..n).filter(|&p| adj[p].contains(&u)));
            for v in nbrs.collect::<Vec<_>>() {
                if left.contains(&v) && seen.insert(v) {
                    comp.push(v);
                    stack.push(v);
                }
            }
        }
        comp.sort_unstable();
        parts.push((comp.into_iter().map(|i| dag.nodes[i].clone()).collect(), true));
    }

    let parts = merge_cyclic_parts(parts, inputs);
    parts
        .into_iter()
        .enumerate()
        .map(|(k, (commits, chore))| inputs.make_milestone(milestone_id(k + 1), commits, judge, chore))
        .collect()
}

/// Merges parts lying on a common cycle of cross-part commit edges.
fn merge_cyclic_parts(parts: Vec<(Vec<CommitId>, bool)>, inputs: &BuildInputs<'_>) -> Vec<(Vec<CommitId>, bool)> {
    let k = parts.len();
    let mut owner = std::collections::HashMap::new();
    for (p, (commits, _)) in parts.iter().enumerate() {
        for c in commits {
            owner.insert(c, p);
        }
    }
    let mut adj = vec![BTreeSet::new(); k];
    for e in &inputs.dag.edges {
        let (a, b) = (owner[&e.from], owner[&e.to]);
        if a != b {
            adj[a].insert(b);
        }
    }
    let comp = scc(&adj);
    let mut merged: BTreeMap<usize, (Vec<CommitId>, bool)> = BTreeMap::new();
    let mut first_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (p, (commits, chore)) in parts.into_iter().enumerate() {
        let leader = *first_of.entry(comp[p]).or_insert(p);
        let slot = merged.entry(leader).or_insert_with(|| (Vec::new(), true));
        slot.0.extend(commits);
        slot.1 &= chore;
    }
    merged.into_values().collect()
}

/// Tarjan's strongly connected components; returns a component label per node.
pub(crate) fn scc(adj: &[BTreeSet<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    let mut comps = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (node, neighbour iterator position)
        let mut work: Vec<(usize, Vec<usize>, usize)> = vec![(root, adj[root].iter().copied().collect(), 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some((v, nbrs, pos)) = work.last_mut() {
            if *pos < nbrs.len() {
                let w = nbrs[*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, adj[w].iter().copied().collect(), 0));
                } else if on_stack[w] {
                    low[*v] = low[*v].min(index[w]);
                }
            } else {
                let v = *v;
                work.pop();
                if let Some((p, _, _)) = work.last() {
                    low[*p] = low[*p].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("scc stack");
                        on_stack[w] = false;
                        label[w] = comps;
                        if w == v {
                            break;
                        }
                    }
                    comps += 1;
                }
            }
        }
    }
    label
}
