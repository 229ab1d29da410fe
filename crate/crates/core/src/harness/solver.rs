//! Solver adapters. A solver edits the persistent workspace for one task.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::tree::{FileTree, Patch};

/// What a solver is told about a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub milestone_id: String,
    pub title: String,
    pub requirements_text: String,
    pub workspace_path: Option<PathBuf>,
}

/// Reference material available to built-in solvers.
pub struct TaskContext<'a> {
    /// Tree before any milestone.
    pub initial: &'a FileTree,
    /// Canonical START and END trees of this milestone.
    pub start: &'a FileTree,
    pub end: &'a FileTree,
    pub gold: &'a Patch,
    /// Pass-to-pass tests of this milestone.
    pub p2p: &'a BTreeSet<String>,
    /// 0-based dispatch position.
    pub dispatch_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveOutcome {
    Completed,
    TimedOut,
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("solver io: {0}")]
    Io(#[from] std::io::Error),
    #[error("solver command failed: {0}")]
    Command(String),
}

pub trait Solver: Sync {
    fn solve(&self, task: &TaskSpec, ctx: &TaskContext<'_>, workspace: &mut FileTree) -> Result<SolveOutcome, SolverError>;
}

/// Applies the gold patch with a three-way merge per file, so earlier edits
/// to the workspace survive where they do not overlap. On a conflict, or for
/// binary content, the END version wins.
pub fn apply_gold(workspace: &mut FileTree, start: &FileTree, end: &FileTree, gold: &Patch) {
    for path in gold.paths() {
        let base = start.get(path);
        let theirs = end.get(path);
        let ours = workspace.get(path);
        if ours == base || ours == theirs {
            match theirs {
                Some(b) => workspace.insert(path, b.clone()),
                None => {
                    workspace.remove(path);
                }
            }
            continue;
        }
        let merged = match (base.and_then(|b| b.as_text()), ours.and_then(|b| b.as_text()), theirs.and_then(|b| b.as_text())) {
            (Some(b), Some(o), Some(t)) => diffy::merge(b, o, t).ok(),
            _ => None,
        };
        match (merged, theirs) {
            (Some(text), _) => workspace.insert(path, crate::tree::Blob::text(&text)),
            (None, Some(b)) => workspace.insert(path, b.clone()),
            (None, None) => {
                workspace.remove(path);
            }
        }
    }
}

/// Replays each milestone's gold patch. The upper bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldSolver;

impl Solver for GoldSolver {
    fn solve(&self, _task: &TaskSpec, ctx: &TaskContext<'_>, ws: &mut FileTree) -> Result<SolveOutcome, SolverError> {
        apply_gold(ws, ctx.start, ctx.end, ctx.gold);
        Ok(SolveOutcome::Completed)
    }
}

/// Whether a test id plausibly covers a path: its first `::` segment equals
/// the extension-less name of some path component.
pub fn test_covers(test_id: &str, path: &str) -> bool {
    let head = test_id.split("::").next().unwrap_or(test_id);
    path.split('/').any(|c| c.split('.').next() == Some(head))
}

/// Gold replay plus one planted regression: at dispatch `at`, after applying
/// the gold patch, reverts `path` (or the first workspace file covered by a
/// pass-to-pass test) to its content before the first milestone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSolver {
    pub at: usize,
    pub path: Option<String>,
}

impl FaultSolver {
    pub fn target(&self, ctx: &TaskContext<'_>, ws: &FileTree) -> Option<String> {
        if let Some(p) = &self.path {
            return Some(p.clone());
        }
        ws.paths()
            .find(|p| ctx.p2p.iter().any(|t| test_covers(t, p)) && !p.ends_with(".check"))
            .map(str::to_string)
    }
}

impl Solver for FaultSolver {
    fn solve(&self, task: &TaskSpec, ctx: &TaskContext<'_>, ws: &mut FileTree) -> Result<SolveOutcome, SolverError> {
        GoldSolver.solve(task, ctx, ws)?;
        if ctx.dispatch_index == self.at {
            if let Some(path) = self.target(ctx, ws) {
                match ctx.initial.get(&path) {
                    Some(b) => ws.insert(path, b.clone()),
                    None => {
                        ws.remove(&path);
                    }
                }
            }
        }
        Ok(SolveOutcome::Completed)
    }
}

/// Runs an external agent. The workspace is written to a scratch directory,
/// the task spec (with `workspace_path` set) goes to stdin as JSON, and the
/// directory is read back once the command exits. A command still running
/// after `timeout` is killed and reported as timed out; its partial edits
/// are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandSolver {
    pub argv: Vec<String>,
    pub timeout: Duration,
}

impl Solver for CommandSolver {
    fn solve(&self, task: &TaskSpec, _ctx: &TaskContext<'_>, ws: &mut FileTree) -> Result<SolveOutcome, SolverError> {
        let (prog, args) = self.argv.split_first().ok_or_else(|| SolverError::Command("empty command".into()))?;
        let dir = tempfile::Builder::new().prefix("mdag-solve").tempdir()?;
        ws.write_dir(dir.path())?;
        let spec = TaskSpec { workspace_path: Some(dir.path().to_path_buf()), ..task.clone() };
        let mut child = Command::new(prog)
            .args(args)
            .current_dir(dir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|e| SolverError::Command(format!("{prog}: {e}")))?;
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(serde_json::to_string(&spec).expect("task serializes").as_bytes());
        }
        let deadline = Instant::now() + self.timeout;
        let outcome = loop {
            if let Some(status) = child.try_wait()? {
                if !status.success() {
                    return Err(SolverError::Command(format!("{prog} exited with {status}")));
                }
                break SolveOutcome::Completed;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                break SolveOutcome::TimedOut;
            }
            std::thread::sleep(Duration::from_millis(20));
        };
        *ws = FileTree::read_dir(dir.path())?;
        Ok(outcome)
    }
}
