//! Milestone DAG construction: seed discovery, consolidation, dependency
//! inference and granularity refinement.

mod consolidate;
mod deps;
mod judge;
mod refine;
mod seeds;

pub use consolidate::consolidate;
pub use deps::{infer_dependencies, CandidateEdge, InconsistentPartition};
pub use judge::{
    BuilderConfig, DefaultJudge, EdgeVerdict, ExternalJudge, SeedFeatures, SemanticJudge,
    ThemeProfile,
};
pub use refine::{population_stats, refine_granularity, PopulationStats, RefineAction, RefineReport};
pub use seeds::discover_seeds;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::graph::{CoChangeMatrix, CommitDag, SymbolTable, TopoMetrics};
use crate::history::{Commit, CommitRange};
use crate::ids::CommitId;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Feature,
    Bugfix,
    Refactor,
    Enhance,
    Chore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    pub id: String,
    pub title: String,
    /// Chronological, hence consistent with the commit DAG.
    pub commits: Vec<CommitId>,
    pub tags: Vec<Category>,
    pub loc: u64,
    pub graded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
}

impl Strength {
    /// Combination along a path: strong only if both legs are strong.
    pub fn chain(self, other: Strength) -> Strength {
        if self == Strength::Strong && other == Strength::Strong {
            Strength::Strong
        } else {
            Strength::Weak
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Functional,
    Process,
}

/// `to` depends on `from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MilestoneEdge {
    pub from: String,
    pub to: String,
    pub strength: Strength,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MilestoneDag {
    pub milestones: Vec<Milestone>,
    pub edges: Vec<MilestoneEdge>,
}

impl MilestoneDag {
    pub fn get(&self, id: &str) -> Option<&Milestone> {
        self.milestones.iter().find(|m| m.id == id)
    }

    pub fn index(&self) -> HashMap<&str, usize> {
        self.milestones
            .iter()
            .enumerate()
            .map(|(i, m)| (m.id.as_str(), i))
            .collect()
    }

    /// Prerequisites of each milestone, keyed by id.
    pub fn prerequisites(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> =
            self.milestones.iter().map(|m| (m.id.as_str(), BTreeSet::new())).collect();
        for e in &self.edges {
            out.entry(e.to.as_str()).or_default().insert(e.from.as_str());
        }
        out
    }

    /// Index adjacency, ignoring edges to unknown ids.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let idx = self.index();
        let mut adj = vec![Vec::new(); self.milestones.len()];
        for e in &self.edges {
            if let (Some(&f), Some(&t)) = (idx.get(e.from.as_str()), idx.get(e.to.as_str())) {
                adj[f].push(t);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn milestone_of_commit(&self) -> HashMap<&CommitId, usize> {
        let mut out = HashMap::new();
        for (i, m) in self.milestones.iter().enumerate() {
            for c in &m.commits {
                out.insert(c, i);
            }
        }
        out
    }
}

/// Everything the builder stages read.
pub struct BuildInputs<'a> {
    pub range: &'a CommitRange,
    pub dag: &'a CommitDag,
    pub metrics: &'a TopoMetrics,
    pub cochange: &'a CoChangeMatrix,
    pub symbols: &'a SymbolTable,
    commits: HashMap<&'a CommitId, (usize, &'a Commit)>,
}

impl<'a> BuildInputs<'a> {
    pub fn new(
        range: &'a CommitRange,
        dag: &'a CommitDag,
        metrics: &'a TopoMetrics,
        cochange: &'a CoChangeMatrix,
        symbols: &'a SymbolTable,
    ) -> Self {
        let commits = range
            .commits
            .iter()
            .enumerate()
            .map(|(i, c)| (&c.id, (i, c)))
            .collect();
        BuildInputs { range, dag, metrics, cochange, symbols, commits }
    }

    pub fn commit(&self, id: &CommitId) -> &'a Commit {
        self.commits[id].1
    }

    pub fn position(&self, id: &CommitId) -> usize {
        self.commits[id].0
    }

    fn sort_chronological(&self, ids: &mut [CommitId]) {
        ids.sort_by_key(|id| self.position(id));
    }

    fn files_of(&self, commits: &[CommitId]) -> BTreeSet<&'a str> {
        commits
            .iter()
            .flat_map(|c| self.commit(c).touched_paths())
            .collect()
    }

    fn make_milestone(&self, id: String, mut commits: Vec<CommitId>, judge: &dyn SemanticJudge, chore: bool) -> Milestone {
        self.sort_chronological(&mut commits);
        let members: Vec<&Commit> = commits.iter().map(|c| self.commit(c)).collect();
        let (title, mut tags) = judge.describe(&members);
        if chore {
            tags = vec![Category::Chore];
        }
        Milestone {
            id,
            title,
            loc: members.iter().map(|c| c.loc()).sum(),
            commits,
            tags,
            graded: true,
        }
    }
}

/// Lower median, 0 for an empty list.
pub fn lower_median(mut xs: Vec<i64>) -> i64 {
    if xs.is_empty() {
        return 0;
    }
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

pub(crate) fn milestone_id(n: usize) -> String {
    format!("M{n:03}")
}

/// Runs the four stages with the given judge.
pub fn build_milestone_dag(
    inputs: &BuildInputs<'_>,
    judge: &dyn SemanticJudge,
    cfg: &BuilderConfig,
    exec: Exec,
) -> Result<(MilestoneDag, RefineReport), InconsistentPartition> {
    let seeds = discover_seeds(inputs, judge, cfg);
    let milestones = consolidate(&seeds, inputs, judge, cfg, exec);
    let mdag = infer_dependencies(milestones, inputs, judge, cfg)?;
    Ok(refine_granularity(mdag, inputs, judge, cfg))
}
