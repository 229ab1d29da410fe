//! Mainline range recovery and source filtering.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use globset::{Glob, GlobSet, GlobSetBuilder};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ids::CommitId;
use crate::vcs::{VcsAdapter, VcsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Add,
    Modify,
    Delete,
    Rename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    /// Source path of a rename.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_path: Option<String>,
    pub kind: ChangeKind,
    pub added_lines: u64,
    pub removed_lines: u64,
}

impl FileChange {
    /// Every path this change touches (both sides of a rename).
    pub fn touched_paths(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.path.as_str()).chain(self.old_path.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefKind {
    #[serde(rename = "PR")]
    Pr,
    #[serde(rename = "Issue")]
    Issue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkedRef {
    pub kind: RefKind,
    pub number: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commit {
    pub id: CommitId,
    pub parent_ids: Vec<CommitId>,
    pub author: String,
    pub timestamp: i64,
    pub message: String,
    pub file_changes: Vec<FileChange>,
    pub linked_refs: Vec<LinkedRef>,
}

impl Commit {
    pub fn first_parent(&self) -> Option<&CommitId> {
        self.parent_ids.first()
    }

    pub fn is_merge(&self) -> bool {
        self.parent_ids.len() > 1
    }

    pub fn loc(&self) -> u64 {
        self.file_changes
            .iter()
            .map(|c| c.added_lines + c.removed_lines)
            .sum()
    }

    pub fn touched_paths(&self) -> BTreeSet<&str> {
        self.file_changes
            .iter()
            .flat_map(FileChange::touched_paths)
            .collect()
    }

    pub fn subject(&self) -> &str {
        self.message.lines().next().unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    NonSourceOnly,
    EmptyAfterFilter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedCommit {
    pub commit_id: CommitId,
    pub reason: RemovalReason,
}

/// Mainline commits between two branch-out points.
///
/// `base` is the start branch-out commit (excluded from the range); `head`
/// is the end branch-out commit (included).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRange {
    pub start_tag: String,
    pub end_tag: String,
    pub base: CommitId,
    pub head: CommitId,
    pub commits: Vec<Commit>,
    pub removed: Vec<RemovedCommit>,
}

impl CommitRange {
    pub fn position_map(&self) -> BTreeMap<&CommitId, usize> {
        self.commits.iter().enumerate().map(|(i, c)| (&c.id, i)).collect()
    }

    pub fn get(&self, id: &CommitId) -> Option<&Commit> {
        self.commits.iter().find(|c| &c.id == id)
    }

    pub fn ids(&self) -> Vec<CommitId> {
        self.commits.iter().map(|c| c.id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub source_whitelist: Vec<String>,
    pub test_file_patterns: Vec<String>,
    pub test_dir_patterns: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            source_whitelist: vec!["src/".into(), "lib/".into()],
            test_file_patterns: vec![
                "*_test.go".into(),
                "test_*.py".into(),
                "*_test.py".into(),
                "*.test.ts".into(),
                "*.test.js".into(),
                "*.check".into(),
            ],
            test_dir_patterns: vec!["tests/".into(), "__tests__/".into()],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FilterConfigError {
    #[error("filter config: {0} must be non-empty")]
    Empty(&'static str),
    #[error("filter config: bad glob {pattern:?}: {source}")]
    BadGlob {
        pattern: String,
        source: globset::Error,
    },
}

/// Compiled form of [`FilterConfig`].
#[derive(Debug, Clone)]
pub struct PathFilter {
    whitelist: Vec<String>,
    file_globs: GlobSet,
    dir_globs: GlobSet,
}

impl PathFilter {
    pub fn new(cfg: &FilterConfig) -> Result<Self, FilterConfigError> {
        if cfg.source_whitelist.is_empty() {
            return Err(FilterConfigError::Empty("source_whitelist"));
        }
        if cfg.test_file_patterns.is_empty() && cfg.test_dir_patterns.is_empty() {
            return Err(FilterConfigError::Empty("test patterns"));
        }
        Ok(PathFilter {
            whitelist: cfg.source_whitelist.clone(),
            file_globs: build_globs(&cfg.test_file_patterns)?,
            dir_globs: build_globs(
                &cfg.test_dir_patterns
                    .iter()
                    .map(|p| p.trim_end_matches('/').to_string())
                    .collect::<Vec<_>>(),
            )?,
        })
    }

    pub fn in_whitelist(&self, path: &str) -> bool {
        self.whitelist.iter().any(|prefix| {
            let prefix = prefix.trim_end_matches('/');
            path == prefix || path.starts_with(&format!("{prefix}/"))
        })
    }

    /// True for paths matching a test filename pattern or living under a test
    /// directory.
    pub fn is_test(&self, path: &str) -> bool {
        let mut parts: Vec<&str> = path.split('/').collect();
        let file = parts.pop().unwrap_or("");
        self.file_globs.is_match(file) || parts.iter().any(|d| self.dir_globs.is_match(d))
    }

    pub fn is_source(&self, path: &str) -> bool {
        self.in_whitelist(path) && !self.is_test(path)
    }

    fn keeps(&self, change: &FileChange) -> bool {
        change.touched_paths().any(|p| self.in_whitelist(p))
            && change.touched_paths().all(|p| !self.is_test(p))
    }
}

fn build_globs(patterns: &[String]) -> Result<GlobSet, FilterConfigError> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        b.add(Glob::new(p).map_err(|source| FilterConfigError::BadGlob {
            pattern: p.clone(),
            source,
        })?);
    }
    b.build().map_err(|source| FilterConfigError::BadGlob {
        pattern: patterns.join(","),
        source,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("{0:?} shares no history with the main branch")]
    DisjointHistory(String),
    #[error("empty range: both tags branch out at {0}")]
    EmptyRange(CommitId),
    #[error("no main branch found (tried {0})")]
    NoMainBranch(String),
    #[error(transparent)]
    Vcs(#[from] VcsError),
}

/// Recovers the first-parent mainline commits strictly after the start
/// tag's branch-out point, up to and including the end tag's branch-out
/// point, oldest first.
pub fn recover_mainline_range(
    history: &dyn VcsAdapter,
    start_tag: &str,
    end_tag: &str,
    main_branches: &[String],
) -> Result<CommitRange, HistoryError> {
    let main = main_branches
        .iter()
        .find(|b| history.branch_exists(b))
        .ok_or_else(|| HistoryError::NoMainBranch(main_branches.join(", ")))?;
    let main_tip = history.resolve(main)?;
    let start = history
        .resolve(start_tag)
        .map_err(|_| HistoryError::UnknownTag(start_tag.to_string()))?;
    let end = history
        .resolve(end_tag)
        .map_err(|_| HistoryError::UnknownTag(end_tag.to_string()))?;
    let base = history
        .merge_base(&start, &main_tip)?
        .ok_or_else(|| HistoryError::DisjointHistory(start_tag.to_string()))?;
    let head = history
        .merge_base(&end, &main_tip)?
        .ok_or_else(|| HistoryError::DisjointHistory(end_tag.to_string()))?;
    if base == head {
        return Err(HistoryError::EmptyRange(base));
    }
    let ids = history.first_parent_log(&base, &head)?;
    let commits = ids
        .iter()
        .map(|id| history.commit(id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CommitRange {
        start_tag: start_tag.to_string(),
        end_tag: end_tag.to_string(),
        base,
        head,
        commits,
        removed: Vec::new(),
    })
}

/// Restricts every commit to whitelisted non-test changes; commits left with
/// nothing move to `removed`.
pub fn filter_commits(range: &CommitRange, filter: &PathFilter) -> CommitRange {
    let mut commits = Vec::with_capacity(range.commits.len());
    let mut removed = range.removed.clone();
    for c in &range.commits {
        let touched_source = c
            .file_changes
            .iter()
            .any(|fc| fc.touched_paths().any(|p| filter.in_whitelist(p)));
        let kept: Vec<FileChange> = c
            .file_changes
            .iter()
            .filter(|fc| filter.keeps(fc))
            .cloned()
            .collect();
        if kept.is_empty() {
            let reason = if c.file_changes.is_empty() || touched_source {
                RemovalReason::EmptyAfterFilter
            } else {
                RemovalReason::NonSourceOnly
            };
            removed.push(RemovedCommit {
                commit_id: c.id.clone(),
                reason,
            });
        } else {
            let mut survivor = c.clone();
            survivor.file_changes = kept;
            commits.push(survivor);
        }
    }
    CommitRange {
        start_tag: range.start_tag.clone(),
        end_tag: range.end_tag.clone(),
        base: range.base.clone(),
        head: range.head.clone(),
        commits,
        removed,
    }
}

/// A PR or Issue with the commits that reference it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefEntry {
    pub number: u64,
    #[serde(default)]
    pub title: String,
    pub commits: Vec<CommitId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefSet {
    #[serde(default)]
    pub prs: Vec<RefEntry>,
    #[serde(default)]
    pub issues: Vec<RefEntry>,
}

/// Drops PRs and Issues no longer referenced by any surviving commit.
pub fn prune_orphaned_refs(range: &CommitRange, refs: &RefSet) -> RefSet {
    let alive: HashSet<&CommitId> = range.commits.iter().map(|c| &c.id).collect();
    let keep = |entries: &[RefEntry]| {
        entries
            .iter()
            .filter(|e| e.commits.iter().any(|c| alive.contains(c)))
            .cloned()
            .collect()
    };
    RefSet {
        prs: keep(&refs.prs),
        issues: keep(&refs.issues),
    }
}

/// Parses PR/Issue references out of a commit message.
///
/// `(#12)` and `Merge pull request #12` are PRs; `fixes|closes|resolves #34`
/// are Issues.
pub fn parse_linked_refs(message: &str) -> Vec<LinkedRef> {
    thread_local! {
        static PR: Regex = Regex::new(r"(?i)(?:\(#(\d+)\)|merge pull request #(\d+))").unwrap();
        static ISSUE: Regex =
            Regex::new(r"(?i)\b(?:fix(?:es|ed)?|close[sd]?|resolve[sd]?)\s+#(\d+)").unwrap();
    }
    let mut out = BTreeSet::new();
    PR.with(|re| {
        for cap in re.captures_iter(message) {
            let n = cap.get(1).or_else(|| cap.get(2)).unwrap();
            out.insert(LinkedRef {
                kind: RefKind::Pr,
                number: n.as_str().parse().unwrap_or(0),
            });
        }
    });
    ISSUE.with(|re| {
        for cap in re.captures_iter(message) {
            out.insert(LinkedRef {
                kind: RefKind::Issue,
                number: cap[1].parse().unwrap_or(0),
            });
        }
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::test_id;

    fn change(path: &str) -> FileChange {
        FileChange {
            path: path.into(),
            old_path: None,
            kind: ChangeKind::Modify,
            added_lines: 1,
            removed_lines: 0,
        }
    }

    fn commit(n: u32, paths: &[&str]) -> Commit {
        Commit {
            id: test_id(n),
            parent_ids: vec![test_id(n - 1)],
            author: "a".into(),
            timestamp: n as i64,
            message: format!("c{n}"),
            file_changes: paths.iter().map(|p| change(p)).collect(),
            linked_refs: vec![],
        }
    }

    fn range(commits: Vec<Commit>) -> CommitRange {
        CommitRange {
            start_tag: "v1".into(),
            end_tag: "v2".into(),
            base: test_id(0),
            head: commits.last().map(|c| c.id.clone()).unwrap_or(test_id(0)),
            commits,
            removed: vec![],
        }
    }

    fn filter() -> PathFilter {
        PathFilter::new(&FilterConfig {
            source_whitelist: vec!["src/".into()],
            test_file_patterns: vec!["*_test.go".into()],
            test_dir_patterns: vec!["tests/".into()],
        })
        .unwrap()
    }

    #[test]
    fn docs_only_commit_is_non_source() {
        let r = filter_commits(&range(vec![commit(1, &["docs/README.md"])]), &filter());
        assert!(r.commits.is_empty());
        assert_eq!(r.removed[0].reason, RemovalReason::NonSourceOnly);
    }

    #[test]
    fn test_file_pattern_dropped() {
        let r = filter_commits(
            &range(vec![commit(1, &["src/a.rs", "src/a_test.go"])]),
            &filter(),
        );
        let paths: Vec<_> = r.commits[0].file_changes.iter().map(|c| &c.path).collect();
        assert_eq!(paths, vec!["src/a.rs"]);
    }

    #[test]
    fn test_dir_pattern_dropped() {
        let r = filter_commits(&range(vec![commit(1, &["src/core/x", "tests/y"])]), &filter());
        assert_eq!(r.commits[0].file_changes.len(), 1);
        assert_eq!(r.commits[0].file_changes[0].path, "src/core/x");
        // nested test dirs inside the whitelist count too
        let r = filter_commits(&range(vec![commit(1, &["src/tests/y"])]), &filter());
        assert_eq!(r.removed[0].reason, RemovalReason::EmptyAfterFilter);
    }

    #[test]
    fn empty_merge_is_empty_after_filter() {
        let mut c = commit(1, &[]);
        c.parent_ids.push(test_id(77));
        let r = filter_commits(&range(vec![c]), &filter());
        assert_eq!(r.removed[0].reason, RemovalReason::EmptyAfterFilter);
    }

    #[test]
    fn rename_into_whitelist_kept() {
        let mut c = commit(1, &[]);
        c.file_changes.push(FileChange {
            path: "src/moved.rs".into(),
            old_path: Some("old/moved.rs".into()),
            kind: ChangeKind::Rename,
            added_lines: 0,
            removed_lines: 0,
        });
        let r = filter_commits(&range(vec![c]), &filter());
        assert_eq!(r.commits.len(), 1);
    }

    #[test]
    fn orphaned_refs_pruned() {
        let r = filter_commits(
            &range(vec![commit(1, &["src/a"]), commit(2, &["docs/b"])]),
            &filter(),
        );
        let refs = RefSet {
            prs: vec![
                RefEntry { number: 7, title: String::new(), commits: vec![test_id(2)] },
                RefEntry { number: 8, title: String::new(), commits: vec![test_id(1), test_id(2)] },
            ],
            issues: vec![],
        };
        let pruned = prune_orphaned_refs(&r, &refs);
        assert_eq!(pruned.prs.iter().map(|e| e.number).collect::<Vec<_>>(), vec![8]);
        let empty = prune_orphaned_refs(&range(vec![]), &refs);
        assert!(empty.prs.is_empty() && empty.issues.is_empty());
    }

    #[test]
    fn linked_refs_from_message() {
        let refs = parse_linked_refs("Add parser (#12)\n\nFixes #3, closes #4");
        assert_eq!(
            refs,
            vec![
                LinkedRef { kind: RefKind::Pr, number: 12 },
                LinkedRef { kind: RefKind::Issue, number: 3 },
                LinkedRef { kind: RefKind::Issue, number: 4 },
            ]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const PATHS: &[&str] = &[
            "src/a.rs", "src/b_test.go", "docs/x.md", "tests/t.rs", "src/tests/u.rs", "lib/c.rs",
            "ci.yml",
        ];

        fn arb_range() -> impl Strategy<Value = CommitRange> {
            prop::collection::vec(prop::collection::vec(0..PATHS.len(), 0..4), 0..12).prop_map(
                |cs| {
                    range(
                        cs.iter()
                            .enumerate()
                            .map(|(i, ps)| {
                                let paths: Vec<&str> = ps.iter().map(|&p| PATHS[p]).collect();
                                commit(i as u32 + 1, &paths)
                            })
                            .collect(),
                    )
                },
            )
        }

        proptest! {
            #[test]
            fn partition_idempotence_and_order(r in arb_range()) {
                let f = filter();
                let once = filter_commits(&r, &f);
                prop_assert_eq!(once.commits.len() + once.removed.len(), r.commits.len());
                let twice = filter_commits(&once, &f);
                prop_assert_eq!(&twice, &once);
                let pos = r.position_map();
                let order: Vec<usize> = once.commits.iter().map(|c| pos[&c.id]).collect();
                prop_assert!(order.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
