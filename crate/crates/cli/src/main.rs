//! `mdag`: milestone DAG reconstruction and continuous evaluation.
//!
//! Exit codes: 0 success, 1 usage, 2 validation failure, 3 pipeline error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use mdag_core::config::Config;
use mdag_core::dot::export_dot;
use mdag_core::harness::{CommandSolver, FaultSolver, GoldSolver, Mode, Solver};
use mdag_core::milestone::{DefaultJudge, ExternalJudge, MilestoneDag, SemanticJudge};
use mdag_core::pipeline::{self, PipelineError, Workspace};
use mdag_core::vcs::{fixture, GitRepo};
use mdag_core::Exec;
use serde_json::json;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_PIPELINE: u8 = 3;

#[derive(Parser)]
#[command(name = "mdag", version, about = "Reconstruct milestone DAGs from git history and evaluate solvers on them")]
struct Cli {
    /// TOML config file; falls back to $MDAG_CONFIG, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Workspace directory holding the phase artifacts.
    #[arg(long, short = 'w', global = true, default_value = "mdag-workspace")]
    workspace: PathBuf,
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Recover and filter the mainline commit range.
    Extract {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
    },
    /// Build the commit dependency DAG and static signals.
    Graph {
        #[arg(long)]
        repo: PathBuf,
    },
    /// Partition the commit DAG into a milestone DAG.
    Milestones {
        #[arg(long, value_enum, default_value_t = JudgeKind::Default)]
        judge: JudgeKind,
    },
    /// Replay milestones and classify test transitions.
    Testbed {
        #[arg(long)]
        repo: PathBuf,
    },
    /// Check the milestone DAG and test signals.
    Validate,
    /// Run every phase from extract through validate.
    Run {
        #[arg(long)]
        repo: PathBuf,
        #[arg(long)]
        start: String,
        #[arg(long)]
        end: String,
        #[arg(long, value_enum, default_value_t = JudgeKind::Default)]
        judge: JudgeKind,
    },
    /// Evaluate a solver on the graded milestone DAG.
    Eval {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = SolverKind::Gold)]
        solver: SolverKind,
        /// Fault solver: dispatch index of the planted regression.
        #[arg(long, default_value_t = 1)]
        fault_at: usize,
        /// Fault solver: file to revert instead of the first covered one.
        #[arg(long)]
        fault_path: Option<String>,
        /// Command solver: program and arguments, split shell-style.
        #[arg(long)]
        command: Option<String>,
        /// Command solver: per-task time limit in seconds.
        #[arg(long, default_value_t = 600)]
        timeout_secs: u64,
    },
    /// Post-process evaluation logs and partitions.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Write the milestone DAG as Graphviz DOT.
    ExportDot {
        /// Export the graded DAG written by validate.
        #[arg(long)]
        graded: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a bundled fixture repository.
    MakeFixture {
        #[arg(long, default_value = "synthetic")]
        name: String,
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum Analysis {
    /// Fit the saturation model to the cumulative score curve.
    Fit {
        #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
        mode: ModeArg,
        /// Also fit every prefix of at least this many milestones.
        #[arg(long)]
        windows: Option<usize>,
    },
    /// Build error chains and check event conservation.
    Chains {
        #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
        mode: ModeArg,
    },
    /// Bin chain events along the replay order.
    Histogram {
        #[arg(long, value_enum, default_value_t = ModeArg::Continuous)]
        mode: ModeArg,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Compare the milestone partition with a reference one.
    Compare {
        /// Milestone DAG JSON or a `{name: [commit ids]}` map.
        #[arg(long)]
        reference: PathBuf,
        /// Restrict both sides to their shared commits first.
        #[arg(long)]
        shared_only: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeKind {
    Default,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Continuous,
    Independent,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Continuous => Mode::Continuous,
            ModeArg::Independent => Mode::Independent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverKind {
    Gold,
    Fault,
    Command,
}

enum Failure {
    Usage(String),
    Validation,
    Pipeline(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Validation) => ExitCode::from(EXIT_VALIDATION),
        Err(Failure::Pipeline(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PIPELINE)
        }
    }
}

fn open_repo(path: &Path) -> Result<GitRepo, Failure> {
    GitRepo::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json value"));
}

/// Runs `f` with the selected judge, persisting the external judge cache.
fn with_judge<T>(kind: JudgeKind, cfg: &Config, f: impl FnOnce(&dyn SemanticJudge) -> Result<T, Failure>) -> Result<T, Failure> {
    match kind {
        JudgeKind::Default => f(&DefaultJudge::new(cfg.builder.clone())),
        JudgeKind::External => {
            let command = cfg
                .judge
                .command
                .as_deref()
                .ok_or_else(|| Failure::Usage("--judge external needs judge.command in the config".into()))?;
            let argv = shlex_split(command)?;
            let judge = ExternalJudge::new(&argv, cfg.judge.cache.clone(), cfg.builder.clone())
                .map_err(|e| Failure::Pipeline(e.to_string()))?;
            let out = f(&judge)?;
            judge.save_cache().map_err(|e| Failure::Pipeline(e.to_string()))?;
            Ok(out)
        }
    }
}

fn shlex_split(s: &str) -> Result<Vec<String>, Failure> {
    match shlex::split(s) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Failure::Usage(format!("cannot split command {s:?}"))),
    }
}

fn validation_outcome(report: &mdag_core::validation::ValidationReport, ws: &Workspace) -> Result<(), Failure> {
    print(json!({ "passed": report.passed, "report": ws.path(pipeline::VALIDATION) }));
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = Config::load(cli.config.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let ws = Workspace::new(&cli.workspace);
    match cli.command {
        Cmd::Extract { repo, start, end } => {
            let range = pipeline::extract(&ws, &open_repo(&repo)?, &start, &end, &cfg)?;
            print(json!({ "commits": range.commits.len(), "removed": range.removed.len() }));
        }
        Cmd::Graph { repo } => {
            let dag = pipeline::graph(&ws, &open_repo(&repo)?, exec)?;
            print(json!({ "nodes": dag.nodes.len(), "edges": dag.edges.len() }));
        }
        Cmd::Milestones { judge } => {
            let mdag = with_judge(judge, &cfg, |j| Ok(pipeline::milestones(&ws, j, &cfg, exec)?))?;
            print(json!({ "milestones": mdag.milestones.len(), "edges": mdag.edges.len() }));
        }
        Cmd::Testbed { repo } => {
            let reports = pipeline::testbed(&ws, &open_repo(&repo)?, &cfg, exec)?;
            let replay: mdag_core::testbed::Replay = ws.read(pipeline::REPLAY).map_err(PipelineError::from)?;
            print(json!({ "milestones": reports.len(), "fidelity": replay.fidelity() }));
        }
        Cmd::Validate => {
            let report = pipeline::validate_phase(&ws)?;
            validation_outcome(&report, &ws)?;
        }
        Cmd::Run { repo, start, end, judge } => {
            let repo = open_repo(&repo)?;
            let report = with_judge(judge, &cfg, |j| Ok(pipeline::run_all(&ws, &repo, &start, &end, j, &cfg, exec)?))?;
            validation_outcome(&report, &ws)?;
        }
        Cmd::Eval { mode, solver, fault_at, fault_path, command, timeout_secs } => {
            let solver: Box<dyn Solver> = match solver {
                SolverKind::Gold => Box::new(GoldSolver),
                SolverKind::Fault => Box::new(FaultSolver { at: fault_at, path: fault_path }),
                SolverKind::Command => {
                    let command = command.ok_or_else(|| Failure::Usage("--solver command needs --command".into()))?;
                    Box::new(CommandSolver { argv: shlex_split(&command)?, timeout: Duration::from_secs(timeout_secs) })
                }
            };
            let agg = pipeline::evaluate(&ws, mode.into(), solver.as_ref(), &cfg, exec)?;
            print(serde_json::to_value(agg).expect("aggregate serializes"));
        }
        Cmd::Analyze { what } => analyze(&ws, what, &cfg, exec)?,
        Cmd::ExportDot { graded, out } => {
            let name = if graded { pipeline::GRADED_DAG } else { pipeline::MILESTONE_DAG };
            let mdag: MilestoneDag = ws.read(name).map_err(PipelineError::from)?;
            let dot = export_dot(&mdag);
            match out {
                Some(p) => std::fs::write(&p, dot).map_err(|e| Failure::Pipeline(format!("{}: {e}", p.display())))?,
                None => print!("{dot}"),
            }
        }
        Cmd::MakeFixture { name, dir } => {
            let s = fixture::by_name(&name, &dir)
                .ok_or_else(|| Failure::Usage(format!("unknown fixture {name:?}; known: {}", fixture::SCENARIOS.join(", "))))?
                .map_err(|e| Failure::Pipeline(e.to_string()))?;
            print(json!({ "repo": dir, "start": s.start_tag, "end": s.end_tag }));
        }
    }
    Ok(())
}

fn analyze(ws: &Workspace, what: Analysis, cfg: &Config, exec: Exec) -> Result<(), Failure> {
    match what {
        Analysis::Fit { mode, windows } => {
            let fits = pipeline::analyze_fit(ws, mode.into(), windows, exec)?;
            print(serde_json::to_value(fits).expect("fits serialize"));
        }
        Analysis::Chains { mode } => {
            let (chains, conserved) = pipeline::analyze_chains(ws, mode.into())?;
            let healed = chains.iter().filter(|c| c.healed).count();
            print(json!({ "chains": chains.len(), "healed": healed, "conserved": conserved }));
        }
        Analysis::Histogram { mode, bins } => {
            let h = pipeline::analyze_histogram(ws, mode.into(), bins.unwrap_or(cfg.analysis.bins))?;
            print!("{}", mdag_core::analysis::histogram_csv(&h));
        }
        Analysis::Compare { reference, shared_only } => {
            let cmp = pipeline::analyze_compare(ws, &reference, shared_only)?;
            print(json!({ "ari": cmp.ari, "nmi": cmp.nmi, "rows": cmp.rows.len(), "cols": cmp.cols.len() }));
        }
    }
    Ok(())
}
