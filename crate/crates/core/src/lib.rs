//! Milestone DAG reconstruction from version-control history and a
//! dependency-driven continuous-evaluation harness.
//!
//! The pipeline runs in phases, each reading and writing canonical JSON
//! artifacts:
//!
//! 1. [`history`] recovers the mainline commit range and filters it to
//!    source changes.
//! 2. [`graph`] builds the blame-based commit dependency DAG and static
//!    signals (symbols, co-change, topology).
//! 3. [`milestone`] partitions the commit DAG into a milestone DAG.
//! 4. [`testbed`] replays milestones in topological order and classifies
//!    test transitions.
//! 5. [`validation`] checks the graph and test signals.
//! 6. [`harness`] evaluates solvers under continuous or independent
//!    protocols, and [`analysis`] post-processes the logs.

pub mod analysis;
pub mod canonical;
pub mod config;
pub mod dot;
pub mod graph;
pub mod harness;
pub mod history;
pub mod ids;
pub mod milestone;
pub mod par;
pub mod pipeline;
pub mod testbed;
pub mod tree;
pub mod validation;
pub mod vcs;

pub use ids::CommitId;
pub use par::Exec;
