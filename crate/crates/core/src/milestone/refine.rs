use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::judge::{jaccard, SplitRequest};
use super::{
    infer_dependencies, lower_median, milestone_id, BuildInputs, BuilderConfig, Category,
    Milestone, MilestoneDag, MilestoneEdge, SemanticJudge,
};
use crate::graph::kahn_order_by;
use crate::ids::CommitId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mean: f64,
    pub std: f64,
    pub cv: f64,
}

/// Mean, population standard deviation and their ratio (0 for an empty or
/// all-zero population).
pub fn population_stats(locs: &[u64]) -> PopulationStats {
    if locs.is_empty() {
        return PopulationStats { mean: 0.0, std: 0.0, cv: 0.0 };
    }
    let n = locs.len() as f64;
    let mean = locs.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = locs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let cv = if mean > 0.0 { std / mean } else { 0.0 };
    PopulationStats { mean, std, cv }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RefineAction {
    Split { round: usize, milestone: String, parts: usize },
    Merge { round: usize, milestone: String, into: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub rounds: usize,
    pub initial_cv: f64,
    pub final_cv: f64,
    /// Ids refer to the milestones as they were when the action ran.
    pub actions: Vec<RefineAction>,
}

fn locs(ms: &[Milestone]) -> Vec<u64> {
    ms.iter().map(|m| m.loc).collect()
}

fn is_chore(m: &Milestone) -> bool {
    m.tags == [Category::Chore]
}

/// Splits oversized and merges undersized milestones until sizes even out.
///
/// A round computes the thresholds once, then applies every split and merge
/// it licenses one at a time, re-deriving edges after each. An action whose
/// result cannot be ordered is reverted. The loop ends after
/// `cfg.max_refine_rounds` rounds, when a round applies nothing, or when the
/// spread drops below `cfg.cv_target` after a round. Final ids follow the
/// topological order, earliest median commit time first.
pub fn refine_granularity(
    mdag: MilestoneDag,
    inputs: &BuildInputs<'_>,
    judge: &dyn SemanticJudge,
    cfg: &BuilderConfig,
) -> (MilestoneDag, RefineReport) {
    let initial_cv = population_stats(&locs(&mdag.milestones)).cv;
    let mut current = mdag;
    let mut actions = Vec::new();
    let mut rounds = 0;
    let mut fresh = 0usize;

    while rounds < cfg.max_refine_rounds {
        let st = population_stats(&locs(&current.milestones));
        let high = st.mean + 2.0 * st.std;
        let low = st.mean - st.std;
        let oversized: Vec<String> = current
            .milestones
            .iter()
            .filter(|m| m.loc as f64 > high && m.commits.len() > 1)
            .map(|m| m.id.clone())
            .collect();
        let mut undersized: Vec<&Milestone> = current
            .milestones
            .iter()
            .filter(|m| (m.loc as f64) < low && m.loc < cfg.small_loc)
            .collect();
        undersized.sort_by(|a, b| (a.loc, &a.id).cmp(&(b.loc, &b.id)));
        let undersized: Vec<String> = undersized.into_iter().map(|m| m.id.clone()).collect();
        if oversized.is_empty() && undersized.is_empty() {
            break;
        }
        rounds += 1;
        let mut applied = false;

        for id in oversized {
            let Some(pos) = current.milestones.iter().position(|m| m.id == id) else { continue };
            let m = current.milestones[pos].clone();
            let groups = judge.split_plan(&split_request(&m, inputs));
            if !valid_split(&m, &groups) {
                continue;
            }
            let parts = groups.len();
            let mut ms = current.milestones.clone();
            ms.remove(pos);
            for g in groups {
                fresh += 1;
                ms.push(inputs.make_milestone(format!("~{fresh}"), g, judge, is_chore(&m)));
            }
            if let Ok(next) = infer_dependencies(ms, inputs, judge, cfg) {
                current = next;
                applied = true;
                actions.push(RefineAction::Split { round: rounds, milestone: id, parts });
            }
        }

        for id in undersized {
            let Some(pos) = current.milestones.iter().position(|m| m.id == id) else { continue };
            // it may have grown by absorbing another small milestone
            if current.milestones[pos].loc >= cfg.small_loc || current.milestones.len() < 2 {
                continue;
            }
            let Some(target) = merge_target(&current, pos, inputs) else { continue };
            let (a, b) = (&current.milestones[pos], &current.milestones[target]);
            let into = b.id.clone();
            let chore = is_chore(a) && is_chore(b);
            let commits: Vec<CommitId> = a.commits.iter().chain(&b.commits).cloned().collect();
            fresh += 1;
            let merged = inputs.make_milestone(format!("~{fresh}"), commits, judge, chore);
            let ms: Vec<Milestone> = current
                .milestones
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != pos && i != target)
                .map(|(_, m)| m.clone())
                .chain(std::iter::once(merged))
                .collect();
            if let Ok(next) = infer_dependencies(ms, inputs, judge, cfg) {
                current = next;
                applied = true;
                actions.push(RefineAction::Merge { round: rounds, milestone: id, into });
            }
        }

        if !applied || population_stats(&locs(&current.milestones)).cv < cfg.cv_target {
            break;
        }
    }

    let final_cv = population_stats(&locs(&current.milestones)).cv;
    let current = renumber(current, inputs);
    (current, RefineReport { rounds, initial_cv, final_cv, actions })
}

fn split_request(m: &Milestone, inputs: &BuildInputs<'_>) -> SplitRequest {
    let local: BTreeMap<&CommitId, usize> = m.commits.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let edges = inputs
        .dag
        .edges
        .iter()
        .filter_map(|e| Some((*local.get(&e.from)?, *local.get(&e.to)?)))
        .collect();
    SplitRequest {
        milestone: m.clone(),
        locs: m.commits.iter().map(|c| inputs.commit(c).loc()).collect(),
        edges,
    }
}

fn valid_split(m: &Milestone, groups: &[Vec<CommitId>]) -> bool {
    if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
        return false;
    }
    let all: Vec<&CommitId> = groups.iter().flatten().collect();
    let set: BTreeSet<&CommitId> = all.iter().copied().collect();
    all.len() == m.commits.len() && set == m.commits.iter().collect()
}

/// DAG neighbor (or, lacking any, any other milestone) with the highest file
/// overlap; ties go to the earlier id.
fn merge_target(d: &MilestoneDag, pos: usize, inputs: &BuildInputs<'_>) -> Option<usize> {
    let id = d.milestones[pos].id.as_str();
    let idx = d.index();
    let mut nbrs: BTreeSet<usize> = d
        .edges
        .iter()
        .filter_map(|e| {
            if e.from == id {
                idx.get(e.to.as_str()).copied()
            } else if e.to == id {
                idx.get(e.from.as_str()).copied()
            } else {
                None
            }
        })
        .collect();
    if nbrs.is_empty() {
        nbrs = (0..d.milestones.len()).filter(|&i| i != pos).collect();
    }
    let own = inputs.files_of(&d.milestones[pos].commits);
    nbrs.into_iter().min_by(|&x, &y| {
        let ox = jaccard(&own, &inputs.files_of(&d.milestones[x].commits));
        let oy = jaccard(&own, &inputs.files_of(&d.milestones[y].commits));
        oy.total_cmp(&ox).then_with(|| d.milestones[x].id.cmp(&d.milestones[y].id))
    })
}

/// Ids follow a topological order that prefers earlier median commit time,
/// so dispatching the lowest available id replays the linearization.
fn renumber(d: MilestoneDag, inputs: &BuildInputs<'_>) -> MilestoneDag {
    let adj = d.adjacency();
    let key: Vec<(i64, usize)> = d
        .milestones
        .iter()
        .map(|m| {
            let median = lower_median(m.commits.iter().map(|c| inputs.commit(c).timestamp).collect());
            (median, m.commits.first().map_or(0, |c| inputs.position(c)))
        })
        .collect();
    let order = kahn_order_by(&adj, |i| key[i]).expect("refined milestone graph is acyclic");
    let mut rename = BTreeMap::new();
    let mut slots: Vec<Option<Milestone>> = d.milestones.into_iter().map(Some).collect();
    let milestones: Vec<Milestone> = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let m = slots[i].take().expect("each index once");
            rename.insert(m.id.clone(), milestone_id(k + 1));
            Milestone { id: milestone_id(k + 1), ..m }
        })
        .collect();
    let mut edges: Vec<MilestoneEdge> = d
        .edges
        .into_iter()
        .map(|e| MilestoneEdge { from: rename[&e.from].clone(), to: rename[&e.to].clone(), ..e })
        .collect();
    edges.sort_by(|x, y| (&x.from, &x.to).cmp(&(&y.from, &y.to)));
    MilestoneDag { milestones, edges }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{spec, Fixture};
    use super::*;
    use crate::milestone::DefaultJudge;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn stats_match_arithmetic_oracle() {
        let s = population_stats(&[100, 100, 100, 100, 100, 1500]);
        assert!(close(s.mean, 333.3, 0.05) && close(s.std, 521.7, 0.1));
        assert!(close(s.mean + 2.0 * s.std, 1376.7, 0.2));
        let s = population_stats(&[500, 600, 40]);
        assert!(close(s.mean, 380.0, 1e-9) && close(s.std, 243.9, 0.05));
        assert!(close(s.mean - s.std, 136.1, 0.05));
        let s = population_stats(&[300, 310, 290]);
        assert!(close(s.cv, 0.027, 0.001));
    }

    fn run(fx: &Fixture, groups: &[&[usize]]) -> (MilestoneDag, RefineReport) {
        let inputs = fx.inputs();
        let judge = DefaultJudge::default();
        let ms = groups
            .iter()
            .enumerate()
            .map(|(k, g)| inputs.make_milestone(milestone_id(k + 1), g.iter().map(|&i| fx.id(i)).collect(), &judge, false))
            .collect();
        let cfg = BuilderConfig::default();
        let d = infer_dependencies(ms, &inputs, &judge, &cfg).unwrap();
        refine_granularity(d, &inputs, &judge, &cfg)
    }

    fn sorted_locs(d: &MilestoneDag) -> Vec<u64> {
        let mut l = locs(&d.milestones);
        l.sort_unstable();
        l
    }

    #[test]
    fn oversized_milestone_split() {
        let fx = Fixture::new(
            &[
                spec(&["a"], 100, "a", 0),
                spec(&["b"], 100, "b", 1),
                spec(&["c"], 100, "c", 2),
                spec(&["d"], 100, "d", 3),
                spec(&["e"], 100, "e", 4),
                spec(&["x"], 750, "x", 5),
                spec(&["y"], 750, "y", 6),
            ],
            &[],
        );
        let (d, rep) = run(&fx, &[&[0], &[1], &[2], &[3], &[4], &[5, 6]]);
        assert_eq!(sorted_locs(&d), vec![100, 100, 100, 100, 100, 750, 750]);
        assert!(matches!(&rep.actions[..], [RefineAction::Split { parts: 2, .. }]));
        // [100 x5, 750, 750]: mean 285.7, std 293.6; no further action applies
        assert!(close(rep.final_cv, 1.0277, 1e-3) && rep.rounds == 1, "{rep:?}");
    }

    #[test]
    fn undersized_milestone_merged_into_overlapping_neighbor() {
        let fx = Fixture::new(
            &[
                spec(&["a"], 500, "a", 0),
                spec(&["b", "s"], 600, "b", 1),
                spec(&["s"], 40, "s", 2),
            ],
            &[],
        );
        let (d, rep) = run(&fx, &[&[0], &[1], &[2]]);
        assert_eq!(sorted_locs(&d), vec![500, 640]);
        assert_eq!(d.milestones[1].commits, vec![fx.id(1), fx.id(2)]);
        assert_eq!(rep.actions.len(), 1);
    }

    #[test]
    fn uniform_sizes_untouched() {
        let fx = Fixture::new(
            &[spec(&["a"], 300, "a", 0), spec(&["b"], 310, "b", 1), spec(&["c"], 290, "c", 2)],
            &[],
        );
        let (d, rep) = run(&fx, &[&[0], &[1], &[2]]);
        assert_eq!(locs(&d.milestones), vec![300, 310, 290]);
        assert!(rep.actions.is_empty());
        assert_eq!(rep.rounds, 0);
    }

    #[test]
    fn refinement_preserves_commit_union() {
        let fx = Fixture::new(
            &[
                spec(&["a"], 10, "a", 0),
                spec(&["a"], 900, "a", 1),
                spec(&["b"], 5, "b", 2),
                spec(&["c"], 2000, "c", 3),
                spec(&["c", "d"], 3000, "c", 4),
            ],
            &[(0, 1), (3, 4)],
        );
        let (d, _) = run(&fx, &[&[0], &[1, 2], &[3, 4]]);
        let mut all: Vec<CommitId> = d.milestones.iter().flat_map(|m| m.commits.clone()).collect();
        all.sort();
        assert_eq!(all, fx.range.ids());
        assert!(crate::graph::kahn_order(&d.adjacency()).is_ok());
    }
}
