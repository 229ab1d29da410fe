//! Pluggable semantic decisions used by the builder stages.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Category, Milestone};
use crate::history::{Commit, LinkedRef};
use crate::ids::CommitId;

const WEEK_SECS: f64 = 7.0 * 24.0 * 3600.0;

/// Tunables for the builder heuristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    pub weight_files: f64,
    pub weight_time: f64,
    pub weight_semantic: f64,
    pub time_scale_secs: f64,
    pub weak_edge_overlap: f64,
    pub max_seeds: usize,
    /// Seeds whose descendant sets overlap at least this much are dropped.
    pub seed_jaccard: f64,
    /// Seed groups are pre-merged at or above this subgraph overlap.
    pub seed_group_jaccard: f64,
    pub max_refine_rounds: usize,
    pub cv_target: f64,
    pub small_loc: u64,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            weight_files: 0.5,
            weight_time: 0.2,
            weight_semantic: 0.3,
            time_scale_secs: WEEK_SECS,
            weak_edge_overlap: 0.25,
            max_seeds: 20,
            seed_jaccard: 0.5,
            seed_group_jaccard: 0.5,
            max_refine_rounds: 5,
            cv_target: 1.0,
            small_loc: 100,
        }
    }
}

/// Topology features of a seed candidate, range-normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedFeatures {
    pub out_degree: f64,
    pub descendant_count: f64,
    pub topo_level: f64,
}

/// What a growing milestone looks like to the assignment step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThemeProfile {
    pub files: BTreeSet<String>,
    pub keywords: BTreeSet<String>,
    pub refs: BTreeSet<LinkedRef>,
    pub timestamps: Vec<i64>,
}

impl ThemeProfile {
    pub fn absorb(&mut self, c: &Commit) {
        self.files.extend(c.touched_paths().into_iter().map(str::to_string));
        self.keywords.extend(keywords(&c.message));
        self.refs.extend(c.linked_refs.iter().copied());
        self.timestamps.push(c.timestamp);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    pub from: String,
    pub to: String,
    pub file_overlap: f64,
    pub symbol_reference: bool,
    pub upstream_earlier: bool,
    pub author_overlap: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVerdict {
    AcceptStrong,
    AcceptWeak,
    Reject,
}

/// Internal commit graph of one milestone, for split planning.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRequest {
    pub milestone: Milestone,
    /// Commit locs in milestone order.
    pub locs: Vec<u64>,
    /// Index pairs into `milestone.commits`.
    pub edges: Vec<(usize, usize)>,
}

pub trait SemanticJudge: Sync {
    fn is_seed(&self, commit: &Commit, features: &SeedFeatures) -> f64;
    fn same_theme(&self, commit: &Commit, theme: &ThemeProfile) -> f64;
    fn confirm_edge(&self, candidate: &CandidateEdge) -> EdgeVerdict;
    fn split_plan(&self, request: &SplitRequest) -> Vec<Vec<CommitId>>;
    /// Title and category tags for a group of commits.
    fn describe(&self, commits: &[&Commit]) -> (String, Vec<Category>);
}

/// Deterministic heuristic judge.
#[derive(Debug, Clone, Default)]
pub struct DefaultJudge {
    pub cfg: BuilderConfig,
}

impl DefaultJudge {
    pub fn new(cfg: BuilderConfig) -> Self {
        DefaultJudge { cfg }
    }
}

const STOPWORDS: &[&str] = &[
    "the", "and", "for", "with", "add", "adds", "added", "fix", "fixes", "fixed", "update",
    "updates", "from", "into", "this", "that", "use", "new", "via", "when", "not", "all", "also",
    "more", "some", "test", "tests", "merge", "branch", "step",
];

/// Lowercase message words of length >= 3, minus common filler.
pub fn keywords(message: &str) -> BTreeSet<String> {
    static WORD: OnceLock<Regex> = OnceLock::new();
    let re = WORD.get_or_init(|| Regex::new(r"[A-Za-z][A-Za-z0-9]{2,}").unwrap());
    re.find_iter(message)
        .map(|m| m.as_str().to_lowercase())
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

pub(crate) fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

impl SemanticJudge for DefaultJudge {
    fn is_seed(&self, _commit: &Commit, f: &SeedFeatures) -> f64 {
        let raw = f.out_degree + f.descendant_count - 0.5 * f.topo_level;
        ((raw + 0.5) / 2.5).clamp(0.0, 1.0)
    }

    fn same_theme(&self, commit: &Commit, theme: &ThemeProfile) -> f64 {
        let files = commit.touched_paths();
        let file_score = if files.is_empty() {
            0.0
        } else {
            files.iter().filter(|f| theme.files.contains(**f)).count() as f64 / files.len() as f64
        };
        let kw = keywords(&commit.message);
        let shared_ref = commit.linked_refs.iter().any(|r| theme.refs.contains(r));
        let semantic = if shared_ref {
            1.0
        } else if kw.is_empty() {
            0.0
        } else {
            kw.iter().filter(|w| theme.keywords.contains(*w)).count() as f64 / kw.len() as f64
        };
        // time alone never makes a commit eligible
        if file_score == 0.0 && semantic == 0.0 {
            return 0.0;
        }
        let dt = theme
            .timestamps
            .iter()
            .map(|t| (commit.timestamp - t).unsigned_abs())
            .min()
            .unwrap_or(u64::MAX) as f64;
        let time = (-dt / self.cfg.time_scale_secs).exp();
        self.cfg.weight_files * file_score + self.cfg.weight_time * time + self.cfg.weight_semantic * semantic
    }

    fn confirm_edge(&self, c: &CandidateEdge) -> EdgeVerdict {
        if c.symbol_reference {
            EdgeVerdict::AcceptStrong
        } else if c.file_overlap >= self.cfg.weak_edge_overlap {
            EdgeVerdict::AcceptWeak
        } else {
            EdgeVerdict::Reject
        }
    }

    fn split_plan(&self, req: &SplitRequest) -> Vec<Vec<CommitId>> {
        let commits = &req.milestone.commits;
        let n = commits.len();
        if n < 2 {
            return vec![commits.clone()];
        }
        // weakly connected components
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut y = x;
            while p[y] != r {
                let next = p[y];
                p[y] = r;
                y = next;
            }
            r
        }
        for &(a, b) in &req.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            comps.entry(r).or_default().push(i);
        }
        if comps.len() > 1 {
            return comps
                .into_values()
                .map(|ix| ix.into_iter().map(|i| commits[i].clone()).collect())
                .collect();
        }
        // one component: cheapest chronological cut, then most balanced
        let total: u64 = req.locs.iter().sum();
        let best = (1..n)
            .min_by_key(|&k| {
                let cut = req.edges.iter().filter(|&&(a, b)| (a < k) != (b < k)).count();
                let left: u64 = req.locs[..k].iter().sum();
                (cut, (2 * left).abs_diff(total), k)
            })
            .expect("n >= 2");
        vec![commits[..best].to_vec(), commits[best..].to_vec()]
    }

    fn describe(&self, commits: &[&Commit]) -> (String, Vec<Category>) {
        let title = match commits {
            [] => String::new(),
            [only] => format!("commit {}", only.id.short()),
            [first, .., last] => format!("commits {}..{}", first.id.short(), last.id.short()),
        };
        let mut tags = BTreeSet::new();
        for c in commits {
            let m = c.message.to_lowercase();
            let cat = if m.contains("fix") || m.contains("bug") {
                Category::Bugfix
            } else if m.contains("refactor") || m.contains("rename") || m.contains("cleanup") {
                Category::Refactor
            } else if m.contains("improve") || m.contains("perf") || m.contains("optimi") || m.contains("enhance") {
                Category::Enhance
            } else {
                Category::Feature
            };
            tags.insert(cat);
        }
        (title, tags.into_iter().collect())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("judge command failed: {0}")]
    Command(String),
    #[error("judge io: {0}")]
    Io(#[from] std::io::Error),
    #[error("judge reply: {0}")]
    Json(#[from] serde_json::Error),
}

/// Judge backed by an external command.
///
/// Each query is sent as one JSON document `{"op": ..., "input": ...}` on the
/// command's stdin and the reply is read as JSON from stdout. Replies are
/// cached by a SHA-256 of the request, and the cache can be persisted so a
/// replay never reaches the command. A failed query falls back to the
/// default judge.
pub struct ExternalJudge {
    program: String,
    args: Vec<String>,
    cache: Mutex<BTreeMap<String, serde_json::Value>>,
    cache_path: Option<PathBuf>,
    fallback: DefaultJudge,
}

impl ExternalJudge {
    pub fn new(command: &[String], cache_path: Option<PathBuf>, cfg: BuilderConfig) -> Result<Self, JudgeError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| JudgeError::Command("empty judge command".into()))?;
        let cache = match &cache_path {
            Some(p) if p.exists() => serde_json::from_str(&std::fs::read_to_string(p)?)?,
            _ => BTreeMap::new(),
        };
        Ok(ExternalJudge {
            program: program.clone(),
            args: args.to_vec(),
            cache: Mutex::new(cache),
            cache_path,
            fallback: DefaultJudge::new(cfg),
        })
    }

    pub fn save_cache(&self) -> Result<(), JudgeError> {
        if let Some(p) = &self.cache_path {
            let cache = self.cache.lock().expect("judge cache lock");
            std::fs::write(p, crate::canonical::to_canonical_json(&*cache))?;
        }
        Ok(())
    }

    fn query<I: Serialize, O: DeserializeOwned + Serialize>(&self, op: &str, input: &I) -> Result<O, JudgeError> {
        let request = serde_json::json!({ "op": op, "input": input });
        let body = serde_json::to_string(&request)?;
        let key = hex::encode(Sha256::digest(body.as_bytes()));
        if let Some(v) = self.cache.lock().expect("judge cache lock").get(&key) {
            return Ok(serde_json::from_value(v.clone())?);
        }
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        child.stdin.take().expect("piped").write_all(body.as_bytes())?;
        let out = child.wait_with_output()?;
        if !out.status.success() {
            return Err(JudgeError::Command(format!("{} exited with {}", self.program, out.status)));
        }
        let value: serde_json::Value = serde_json::from_slice(&out.stdout)?;
        let parsed: O = serde_json::from_value(value.clone())?;
        self.cache.lock().expect("judge cache lock").insert(key, value);
        Ok(parsed)
    }

    fn or_fallback<O>(&self, op: &str, r: Result<O, JudgeError>, fallback: impl FnOnce() -> O) -> O {
        r.unwrap_or_else(|e| {
            log::warn!("external judge {op} failed, using default: {e}");
            fallback()
        })
    }
}

#[derive(Serialize)]
struct CommitView<'a> {
    id: &'a CommitId,
    message: &'a str,
    files: Vec<&'a str>,
}

impl<'a> From<&'a Commit> for CommitView<'a> {
    fn from(c: &'a Commit) -> Self {
        CommitView {
            id: &c.id,
            message: &c.message,
            files: c.touched_paths().into_iter().collect(),
        }
    }
}

impl SemanticJudge for ExternalJudge {
    fn is_seed(&self, commit: &Commit, features: &SeedFeatures) -> f64 {
        let r = self.query::<_, f64>("is_seed", &(CommitView::from(commit), features));
        self.or_fallback("is_seed", r, || self.fallback.is_seed(commit, features)).clamp(0.0, 1.0)
    }

    fn same_theme(&self, commit: &Commit, theme: &ThemeProfile) -> f64 {
        let r = self.query::<_, f64>("same_theme", &(CommitView::from(commit), theme));
        self.or_fallback("same_theme", r, || self.fallback.same_theme(commit, theme)).clamp(0.0, 1.0)
    }

    fn confirm_edge(&self, candidate: &CandidateEdge) -> EdgeVerdict {
        let r = self.query("confirm_edge", candidate);
        self.or_fallback("confirm_edge", r, || self.fallback.confirm_edge(candidate))
    }

    fn split_plan(&self, request: &SplitRequest) -> Vec<Vec<CommitId>> {
        let r: Result<Vec<Vec<CommitId>>, _> = self.query("split_plan", request);
        let plan = self.or_fallback("split_plan", r, || self.fallback.split_plan(request));
        // a plan must repartition exactly the milestone's commits
        let mut got: Vec<&CommitId> = plan.iter().flatten().collect();
        got.sort();
        let mut want: Vec<&CommitId> = request.milestone.commits.iter().collect();
        want.sort();
        if got == want && plan.iter().all(|g| !g.is_empty()) {
            plan
        } else {
            log::warn!("external split plan for {} rejected", request.milestone.id);
            self.fallback.split_plan(request)
        }
    }

    fn describe(&self, commits: &[&Commit]) -> (String, Vec<Category>) {
        let views: Vec<CommitView> = commits.iter().map(|c| CommitView::from(*c)).collect();
        let r = self.query("describe", &views);
        self.or_fallback("describe", r, || self.fallback.describe(commits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::test_id;

    fn commit(msg: &str, files: &[&str], ts: i64) -> Commit {
        Commit {
            id: test_id(9),
            parent_ids: vec![],
            author: "a".into(),
            timestamp: ts,
            message: msg.into(),
            file_changes: files
                .iter()
                .map(|f| crate::history::FileChange {
                    path: f.to_string(),
                    old_path: None,
                    kind: crate::history::ChangeKind::Modify,
                    added_lines: 1,
                    removed_lines: 0,
                })
                .collect(),
            linked_refs: vec![],
        }
    }

    #[test]
    fn theme_score_uses_weights() {
        let judge = DefaultJudge::default();
        let mut theme = ThemeProfile::default();
        theme.absorb(&commit("parser: tokens", &["a", "b"], 0));
        let c = commit("parser: more tokens", &["a", "b"], 0);
        // files 1.0, time exp(0) = 1, keywords {parser, tokens} all shared
        assert!((judge.same_theme(&c, &theme) - 1.0).abs() < 1e-12);
        let far = commit("unrelated words", &["z"], 10_000_000);
        assert_eq!(judge.same_theme(&far, &theme), 0.0);
        let half = commit("zzz", &["a", "q"], 7 * 24 * 3600);
        let want = 0.5 * 0.5 + 0.2 * (-1.0f64).exp();
        assert!((judge.same_theme(&half, &theme) - want).abs() < 1e-12);
    }

    #[test]
    fn default_edge_rules() {
        let judge = DefaultJudge::default();
        let mut c = CandidateEdge {
            from: "M1".into(),
            to: "M2".into(),
            file_overlap: 0.1,
            symbol_reference: false,
            upstream_earlier: true,
            author_overlap: 0.0,
            rank: 0.0,
        };
        assert_eq!(judge.confirm_edge(&c), EdgeVerdict::Reject);
        c.file_overlap = 0.25;
        assert_eq!(judge.confirm_edge(&c), EdgeVerdict::AcceptWeak);
        c.symbol_reference = true;
        assert_eq!(judge.confirm_edge(&c), EdgeVerdict::AcceptStrong);
    }

    #[test]
    fn external_judge_caches_and_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.json");
        let cmd = vec!["sh".into(), "-c".into(), "cat >/dev/null; echo '\"accept_weak\"'".into()];
        let judge = ExternalJudge::new(&cmd, Some(cache.clone()), BuilderConfig::default()).unwrap();
        let cand = CandidateEdge {
            from: "M1".into(),
            to: "M2".into(),
            file_overlap: 0.0,
            symbol_reference: false,
            upstream_earlier: true,
            author_overlap: 0.0,
            rank: 0.0,
        };
        assert_eq!(judge.confirm_edge(&cand), EdgeVerdict::AcceptWeak);
        judge.save_cache().unwrap();
        // replay from the cache with a command that would fail
        let broken = vec!["false".into()];
        let replay = ExternalJudge::new(&broken, Some(cache), BuilderConfig::default()).unwrap();
        assert_eq!(replay.confirm_edge(&cand), EdgeVerdict::AcceptWeak);
        // uncached query on the failing command uses the default rules
        let mut other = cand.clone();
        other.symbol_reference = true;
        assert_eq!(replay.confirm_edge(&other), EdgeVerdict::AcceptStrong);
    }
}
