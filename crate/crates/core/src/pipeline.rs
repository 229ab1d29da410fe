//! Phase orchestration over a workspace directory.
//!
//! Each phase reads the artifacts of earlier phases and writes its own under
//! a numbered name, so a run can resume after any phase. Artifacts never
//! record the repository location; the repository is supplied per call.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::analysis::{
    build_error_chains, chain_event_counts, change_scope, compare_partitions, contingency_csv,
    cumulative_scores, fit_saturation_with, histogram_csv, partition_of, propagation_histogram,
    raw_failure_counts, restrict_to_shared, ErrorChain, FitError, Partition, PartitionComparison,
    PartitionError, PropagationHistogram, SaturationFit,
};
use crate::canonical::{read_artifact, read_text, to_json_lines, write_artifact, write_text, ArtifactError};
use crate::config::{Config, RunnerConfig};
use crate::graph::{
    build_commit_dag, build_symbol_table, compute_cochange, topo_metrics, CoChangeMatrix,
    CommitDag, GraphError, SymbolTable, TopoMetrics,
};
use crate::harness::{aggregate, Aggregate, EvaluationLog, Harness, HarnessError, Mode, Solver};
use crate::history::{
    filter_commits, prune_orphaned_refs, recover_mainline_range, CommitRange, FilterConfigError, HistoryError,
    PathFilter, RefEntry, RefKind, RefSet,
};
use crate::milestone::{
    build_milestone_dag, BuildInputs, InconsistentPartition, MilestoneDag, RefineReport, SemanticJudge,
};
use crate::par::Exec;
use crate::testbed::{
    materialize_states, plan_linearization, run_testbed, CommandRunner, DeclarativeRunner, Replay, RunnerError,
    ScriptedRunner, TestRunner, TestTransitionReport, TestbedError,
};
use crate::validation::{validate, ValidationReport};
use crate::vcs::GitRepo;

pub const COMMIT_RANGE: &str = "01_commit_range.json";
pub const REFS: &str = "01_refs.json";
pub const COMMIT_DAG: &str = "02_commit_dag.json";
pub const BLAME_WARNINGS: &str = "02_blame_warnings.json";
pub const TOPO_METRICS: &str = "02_topo_metrics.json";
pub const COCHANGE: &str = "02_cochange.json";
pub const SYMBOLS: &str = "02_symbols.json";
pub const MILESTONE_DAG: &str = "03_milestone_dag.json";
pub const REFINE_REPORT: &str = "03_refine_report.json";
pub const REPLAY: &str = "04_replay.json";
pub const TRANSITIONS: &str = "04_transitions.json";
pub const VALIDATION: &str = "05_validation.json";
pub const GRADED_DAG: &str = "05_milestone_dag.json";
pub const EVAL_SUMMARY: &str = "06_eval_summary.json";
pub const FIT: &str = "07_fit.json";
pub const CHAINS: &str = "07_chains.jsonl";
pub const CHAIN_COUNTS: &str = "07_chain_counts.json";
pub const HISTOGRAM: &str = "07_histogram.csv";
pub const COMPARISON: &str = "07_comparison.json";
pub const CONTINGENCY: &str = "07_contingency.csv";

pub fn eval_log_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Continuous => "06_eval_continuous.jsonl",
        Mode::Independent => "06_eval_independent.jsonl",
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Filter(#[from] FilterConfigError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Partition(#[from] InconsistentPartition),
    #[error(transparent)]
    Testbed(#[from] TestbedError),
    #[error(transparent)]
    Runner(#[from] RunnerError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Compare(#[from] PartitionError),
    #[error("evaluation log {0} has no records")]
    EmptyLog(String),
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
}

/// A directory of phase artifacts for one (repository, range) pair.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    pub fn write<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), ArtifactError> {
        write_artifact(&self.path(name), value)
    }

    pub fn read<T: DeserializeOwned>(&self, name: &str) -> Result<T, ArtifactError> {
        read_artifact(&self.path(name))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), ArtifactError> {
        write_text(&self.path(name), text)
    }

    pub fn read_text(&self, name: &str) -> Result<String, ArtifactError> {
        read_text(&self.path(name))
    }
}

/// Builds the configured test runner.
pub fn make_runner(cfg: &RunnerConfig) -> Result<Box<dyn TestRunner>, PipelineError> {
    Ok(match cfg {
        RunnerConfig::Declarative => Box::new(DeclarativeRunner),
        RunnerConfig::Scripted { script } => {
            let text = read_text(script)?;
            Box::new(ScriptedRunner::from_json(&text)?)
        }
        RunnerConfig::Command { collect, run } => Box::new(CommandRunner { collect: collect.clone(), run: run.clone() }),
    })
}

/// PR and Issue records linked from commit messages of `range`.
pub fn refs_from_messages(range: &CommitRange) -> RefSet {
    let mut prs: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    let mut issues: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for c in &range.commits {
        for r in &c.linked_refs {
            let bucket = match r.kind {
                RefKind::Pr => &mut prs,
                RefKind::Issue => &mut issues,
            };
            bucket.entry(r.number).or_default().push(c.id.clone());
        }
    }
    let entries = |m: BTreeMap<u64, Vec<_>>| {
        m.into_iter()
            .map(|(number, commits)| RefEntry { number, title: String::new(), commits })
            .collect()
    };
    RefSet { prs: entries(prs), issues: entries(issues) }
}

/// Recovers and filters the range, writing `01_*`.
pub fn extract(ws: &Workspace, repo: &GitRepo, start: &str, end: &str, cfg: &Config) -> Result<CommitRange, PipelineError> {
    let raw = recover_mainline_range(repo, start, end, &cfg.main_branches)?;
    let filter = PathFilter::new(&cfg.filter)?;
    let range = filter_commits(&raw, &filter);
    let refs = prune_orphaned_refs(&range, &refs_from_messages(&raw));
    log::info!("extract: {} commits kept, {} removed", range.commits.len(), range.removed.len());
    ws.write(COMMIT_RANGE, &range)?;
    ws.write(REFS, &refs)?;
    Ok(range)
}

/// Builds the commit DAG and static signals, writing `02_*`.
pub fn graph(ws: &Workspace, repo: &GitRepo, exec: Exec) -> Result<CommitDag, PipelineError> {
    let range: CommitRange = ws.read(COMMIT_RANGE)?;
    let (dag, warnings) = build_commit_dag(&range, repo, exec);
    let metrics = topo_metrics(&dag)?;
    let cochange = compute_cochange(&range);
    let symbols = build_symbol_table(&range, repo, exec);
    log::info!("graph: {} nodes, {} edges, {} blame warnings", dag.nodes.len(), dag.edges.len(), warnings.len());
    ws.write(COMMIT_DAG, &dag)?;
    ws.write(BLAME_WARNINGS, &warnings)?;
    ws.write(TOPO_METRICS, &metrics)?;
    ws.write(COCHANGE, &cochange)?;
    ws.write(SYMBOLS, &symbols)?;
    Ok(dag)
}

/// Partitions the commit DAG into milestones, writing `03_*`.
pub fn milestones(ws: &Workspace, judge: &dyn SemanticJudge, cfg: &Config, exec: Exec) -> Result<MilestoneDag, PipelineError> {
    let range: CommitRange = ws.read(COMMIT_RANGE)?;
    let dag: CommitDag = ws.read(COMMIT_DAG)?;
    let metrics: TopoMetrics = ws.read(TOPO_METRICS)?;
    let cochange: CoChangeMatrix = ws.read(COCHANGE)?;
    let symbols: SymbolTable = ws.read(SYMBOLS)?;
    let inputs = BuildInputs::new(&range, &dag, &metrics, &cochange, &symbols);
    let (mdag, report): (MilestoneDag, RefineReport) = build_milestone_dag(&inputs, judge, &cfg.builder, exec)?;
    log::info!("milestones: {} milestones, {} edges", mdag.milestones.len(), mdag.edges.len());
    ws.write(MILESTONE_DAG, &mdag)?;
    ws.write(REFINE_REPORT, &report)?;
    Ok(mdag)
}

/// Replays milestones and classifies test transitions, writing `04_*`.
pub fn testbed(ws: &Workspace, repo: &GitRepo, cfg: &Config, exec: Exec) -> Result<Vec<TestTransitionReport>, PipelineError> {
    let range: CommitRange = ws.read(COMMIT_RANGE)?;
    let mdag: MilestoneDag = ws.read(MILESTONE_DAG)?;
    let order = plan_linearization(&mdag, &range)?;
    let replay = materialize_states(&order, &mdag, &range, repo)?;
    if !replay.fidelity() {
        log::warn!("testbed: final tree {} differs from end tree {}", replay.final_tree_id, replay.expected_tree_id);
    }
    ws.write(REPLAY, &replay)?;
    let runner = make_runner(&cfg.testbed.runner)?;
    let filter = PathFilter::new(&cfg.filter)?;
    let reports = run_testbed(&replay, runner.as_ref(), cfg.testbed.k_runs, &filter, exec)?;
    ws.write(TRANSITIONS, &reports)?;
    Ok(reports)
}

/// Runs the graph and signal checks, writing `05_*`.
///
/// The graded milestone DAG is the testbed-annotated one when transitions
/// exist, else a copy of the phase 3 graph.
pub fn validate_phase(ws: &Workspace) -> Result<ValidationReport, PipelineError> {
    let range: CommitRange = ws.read(COMMIT_RANGE)?;
    let cdag: CommitDag = ws.read(COMMIT_DAG)?;
    let mdag: MilestoneDag = ws.read(MILESTONE_DAG)?;
    let reports: Option<Vec<TestTransitionReport>> =
        if ws.exists(TRANSITIONS) { Some(ws.read(TRANSITIONS)?) } else { None };
    let (report, graded) = validate(&mdag, &range, &cdag, reports.as_deref());
    ws.write(VALIDATION, &report)?;
    ws.write(GRADED_DAG, graded.as_ref().unwrap_or(&mdag))?;
    Ok(report)
}

/// Every phase from extraction through validation.
pub fn run_all(
    ws: &Workspace,
    repo: &GitRepo,
    start: &str,
    end: &str,
    judge: &dyn SemanticJudge,
    cfg: &Config,
    exec: Exec,
) -> Result<ValidationReport, PipelineError> {
    extract(ws, repo, start, end, cfg)?;
    graph(ws, repo, exec)?;
    milestones(ws, judge, cfg, exec)?;
    testbed(ws, repo, cfg, exec)?;
    validate_phase(ws)
}

/// Evaluates `solver` under `mode`, writing the log and updating the summary.
pub fn evaluate(ws: &Workspace, mode: Mode, solver: &dyn Solver, cfg: &Config, exec: Exec) -> Result<Aggregate, PipelineError> {
    let mdag: MilestoneDag = ws.read(GRADED_DAG)?;
    let replay: Replay = ws.read(REPLAY)?;
    let reports: Vec<TestTransitionReport> = ws.read(TRANSITIONS)?;
    let runner = make_runner(&cfg.testbed.runner)?;
    let filter = PathFilter::new(&cfg.filter)?;
    let harness = Harness { mdag: &mdag, replay: &replay, reports: &reports, runner: runner.as_ref(), filter: &filter };
    let log = match mode {
        Mode::Continuous => harness.run_continuous(solver, exec)?,
        Mode::Independent => harness.run_independent(solver, exec)?,
    };
    ws.write_text(eval_log_name(mode), &log.to_jsonl())?;
    let agg = aggregate(&log);
    let mut summary: BTreeMap<Mode, Aggregate> = if ws.exists(EVAL_SUMMARY) { ws.read(EVAL_SUMMARY)? } else { BTreeMap::new() };
    summary.insert(mode, agg.clone());
    ws.write(EVAL_SUMMARY, &summary)?;
    Ok(agg)
}

pub fn read_log(ws: &Workspace, mode: Mode) -> Result<EvaluationLog, PipelineError> {
    let name = eval_log_name(mode);
    let text = ws.read_text(name)?;
    EvaluationLog::from_jsonl(mode, &text).map_err(|e| PipelineError::Parse { path: name.into(), detail: e.to_string() })
}

/// Fits the saturation model to the cumulative score curve of a log.
///
/// With `windows`, the fit is repeated on every prefix of at least that
/// many milestones (three at least); the last entry is always the
/// full-curve fit.
pub fn analyze_fit(ws: &Workspace, mode: Mode, windows: Option<usize>, exec: Exec) -> Result<Vec<SaturationFit>, PipelineError> {
    let log = read_log(ws, mode)?;
    let points = cumulative_scores(&log);
    if points.is_empty() {
        return Err(PipelineError::EmptyLog(eval_log_name(mode).into()));
    }
    let min = windows.unwrap_or(points.len()).max(3).min(points.len());
    let fits = (min..=points.len())
        .map(|n| fit_saturation_with(&points[..n], exec))
        .collect::<Result<Vec<_>, _>>()?;
    ws.write(FIT, &fits)?;
    Ok(fits)
}

/// Builds error chains for a log and checks event conservation.
pub fn analyze_chains(ws: &Workspace, mode: Mode) -> Result<(Vec<ErrorChain>, bool), PipelineError> {
    let log = read_log(ws, mode)?;
    let reports: Vec<TestTransitionReport> = ws.read(TRANSITIONS)?;
    let replay: Replay = ws.read(REPLAY)?;
    let scope = change_scope(&reports, &replay);
    let chains = build_error_chains(&log, &scope);
    let raw = raw_failure_counts(&log);
    let events = chain_event_counts(&chains);
    let mut nonzero = raw.clone();
    nonzero.retain(|_, n| *n > 0);
    let conserved = nonzero == events;
    ws.write_text(CHAINS, &to_json_lines(&chains))?;
    ws.write(CHAIN_COUNTS, &serde_json::json!({ "raw": raw, "chains": events, "conserved": conserved }))?;
    Ok((chains, conserved))
}

/// Bins chain events along the replay order.
pub fn analyze_histogram(ws: &Workspace, mode: Mode, bins: usize) -> Result<PropagationHistogram, PipelineError> {
    let (chains, _) = analyze_chains(ws, mode)?;
    let replay: Replay = ws.read(REPLAY)?;
    let h = propagation_histogram(&chains, &replay.order, bins);
    ws.write_text(HISTOGRAM, &histogram_csv(&h))?;
    Ok(h)
}

/// Reads a partition from a milestone DAG artifact or a `{name: [commits]}` map.
pub fn read_partition(path: &Path) -> Result<Partition, PipelineError> {
    let text = read_text(path)?;
    if let Ok(mdag) = serde_json::from_str::<MilestoneDag>(&text) {
        return Ok(partition_of(&mdag));
    }
    serde_json::from_str::<BTreeMap<String, Vec<String>>>(&text)
        .map(|m| m.into_iter().collect())
        .map_err(|e| PipelineError::Parse { path: path.display().to_string(), detail: e.to_string() })
}

/// Compares the workspace partition with a reference partition.
///
/// With `shared_only`, both sides are first restricted to the commits they
/// have in common.
pub fn analyze_compare(ws: &Workspace, reference: &Path, shared_only: bool) -> Result<PartitionComparison, PipelineError> {
    let mdag: MilestoneDag = ws.read(MILESTONE_DAG)?;
    let ours = partition_of(&mdag);
    let theirs = read_partition(reference)?;
    let (a, b) = if shared_only { restrict_to_shared(&ours, &theirs) } else { (ours, theirs) };
    let cmp = compare_partitions(&a, &b)?;
    ws.write(COMPARISON, &cmp)?;
    ws.write_text(CONTINGENCY, &contingency_csv(&cmp))?;
    Ok(cmp)
}
