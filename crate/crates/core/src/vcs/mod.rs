//! Version-control adapter contract and its git-backed implementation.

pub mod fixture;
mod git;

pub use git::{GitRepo, GitReplay};

use crate::history::Commit;
use crate::ids::CommitId;
use crate::tree::FileTree;

#[derive(Debug, thiserror::Error)]
pub enum VcsError {
    #[error("cannot resolve {0:?}")]
    Unresolved(String),
    #[error("`git {args}` failed: {stderr}")]
    Command { args: String, stderr: String },
    #[error("failed to run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("unexpected git output: {0}")]
    Parse(String),
}

/// Per-line attribution from blame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlameLine {
    pub commit: CommitId,
    /// Path of the line in the attributing commit; differs from the blamed
    /// path when the file was renamed since.
    pub orig_path: String,
}

/// Zero-context diff of one file against the first parent.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FileDiff {
    pub old_path: Option<String>,
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Hunk {
    /// First removed line in the old file, 1-based.
    pub old_start: u32,
    pub old_len: u32,
    pub new_start: u32,
    pub new_len: u32,
    pub added: Vec<String>,
    pub removed: Vec<String>,
}

/// Read-side operations the pipeline needs from a repository.
pub trait VcsAdapter: Sync {
    fn resolve(&self, rev: &str) -> Result<CommitId, VcsError>;
    fn branch_exists(&self, name: &str) -> bool;
    fn merge_base(&self, a: &CommitId, b: &CommitId) -> Result<Option<CommitId>, VcsError>;
    /// First-parent chain from `from` (exclusive) to `to` (inclusive), oldest first.
    fn first_parent_log(&self, from: &CommitId, to: &CommitId) -> Result<Vec<CommitId>, VcsError>;
    /// Metadata plus file changes against the first parent.
    fn commit(&self, id: &CommitId) -> Result<Commit, VcsError>;
    fn diff(&self, id: &CommitId) -> Result<Vec<FileDiff>, VcsError>;
    fn blame(&self, path: &str, at: &CommitId) -> Result<Vec<BlameLine>, VcsError>;
    fn read_file(&self, at: &CommitId, path: &str) -> Result<Option<Vec<u8>>, VcsError>;
    fn read_tree(&self, rev: &str) -> Result<FileTree, VcsError>;
    fn tree_id(&self, rev: &str) -> Result<String, VcsError>;
}
