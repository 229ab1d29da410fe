//! Test execution adapters.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::tree::FileTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
    Missing,
}

impl Status {
    pub fn is_failing(self) -> bool {
        matches!(self, Status::Fail | Status::Error)
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s.to_ascii_lowercase().as_str() {
            "pass" | "passed" | "ok" => Some(Status::Pass),
            "fail" | "failed" => Some(Status::Fail),
            "error" => Some(Status::Error),
            "missing" => Some(Status::Missing),
            _ => None,
        }
    }
}

/// Infrastructure failure, as opposed to a failing test.
#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("runner io: {0}")]
    Io(#[from] std::io::Error),
    #[error("runner command {command:?} failed: {detail}")]
    Command { command: String, detail: String },
    #[error("runner script: {0}")]
    Script(String),
}

/// Collects and runs tests against a tree.
///
/// `attempt` numbers repeated runs of the same tree from 0 so scripted
/// runners can replay fixed per-run outcomes.
pub trait TestRunner: Sync {
    fn collect(&self, tree: &FileTree) -> Result<BTreeSet<String>, RunnerError>;
    fn run(
        &self,
        tree: &FileTree,
        tests: &BTreeSet<String>,
        attempt: usize,
    ) -> Result<BTreeMap<String, Status>, RunnerError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Check {
    Contains(String, String),
    Lacks(String, String),
    Exists(String),
    Malformed(String),
}

/// Runs `*.check` files found anywhere in the tree.
///
/// ```text
/// test parse
///   contains src/parser.rs "fn parse("
///   lacks src/parser.rs "todo!()"
///   exists src/lib.rs
/// ```
///
/// Test ids are `<file stem>::<name>`. A malformed assertion makes the test
/// report `error`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeclarativeRunner;

fn parse_checks(text: &str) -> Vec<(String, Vec<Check>)> {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    let quoted = QUOTED.get_or_init(|| Regex::new(r#"^(contains|lacks)\s+(\S+)\s+"(.*)"$"#).unwrap());
    let mut tests: Vec<(String, Vec<Check>)> = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix("test ") {
            tests.push((name.trim().to_string(), Vec::new()));
            continue;
        }
        let Some((_, checks)) = tests.last_mut() else { continue };
        let check = if let Some(c) = quoted.captures(trimmed) {
            let (path, needle) = (c[2].to_string(), c[3].replace("\\\"", "\""));
            if &c[1] == "contains" {
                Check::Contains(path, needle)
            } else {
                Check::Lacks(path, needle)
            }
        } else if let Some(path) = trimmed.strip_prefix("exists ") {
            Check::Exists(path.trim().to_string())
        } else {
            Check::Malformed(trimmed.to_string())
        };
        checks.push(check);
    }
    tests
}

fn stem(path: &str) -> &str {
    let file = path.rsplit('/').next().unwrap_or(path);
    file.split('.').next().unwrap_or(file)
}

impl DeclarativeRunner {
    fn suites(tree: &FileTree) -> BTreeMap<String, Vec<Check>> {
        let mut out = BTreeMap::new();
        for path in tree.paths().filter(|p| p.ends_with(".check")) {
            let Some(text) = tree.get_text(path) else { continue };
            for (name, checks) in parse_checks(text) {
                out.insert(format!("{}::{name}", stem(path)), checks);
            }
        }
        out
    }
}

impl TestRunner for DeclarativeRunner {
    fn collect(&self, tree: &FileTree) -> Result<BTreeSet<String>, RunnerError> {
        Ok(Self::suites(tree).into_keys().collect())
    }

    fn run(&self, tree: &FileTree, tests: &BTreeSet<String>, _attempt: usize) -> Result<BTreeMap<String, Status>, RunnerError> {
        let suites = Self::suites(tree);
        let text = |p: &str| tree.get_text(p);
        Ok(tests
            .iter()
            .filter_map(|id| {
                let checks = suites.get(id)?;
                let mut status = Status::Pass;
                for c in checks {
                    let ok = match c {
                        Check::Contains(p, needle) => text(p).is_some_and(|t| t.contains(needle.as_str())),
                        Check::Lacks(p, needle) => text(p).is_some_and(|t| !t.contains(needle.as_str())),
                        Check::Exists(p) => tree.get(p).is_some(),
                        Check::Malformed(_) => {
                            status = Status::Error;
                            break;
                        }
                    };
                    if !ok {
                        status = Status::Fail;
                    }
                }
                Some((id.clone(), status))
            })
            .collect())
    }
}

/// Replays predetermined outcomes.
///
/// The script maps a state key to per-test outcome sequences; run `k` of a
/// state reports element `k mod len`. A `missing` element leaves the test
/// out of that run. The state key is the trimmed content of
/// [`STATE_LABEL_FILE`] when the tree has one, else the tree's content hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedRunner {
    pub states: BTreeMap<String, BTreeMap<String, Vec<Status>>>,
}

pub const STATE_LABEL_FILE: &str = ".mdag-state";

impl ScriptedRunner {
    pub fn from_json(text: &str) -> Result<Self, RunnerError> {
        serde_json::from_str(text).map_err(|e| RunnerError::Script(e.to_string()))
    }

    fn state(&self, tree: &FileTree) -> Option<&BTreeMap<String, Vec<Status>>> {
        let key = match tree.get_text(STATE_LABEL_FILE) {
            Some(label) => label.trim().to_string(),
            None => tree.content_hash(),
        };
        self.states.get(&key)
    }
}

impl TestRunner for ScriptedRunner {
    fn collect(&self, tree: &FileTree) -> Result<BTreeSet<String>, RunnerError> {
        Ok(self
            .state(tree)
            .map(|s| s.keys().cloned().collect())
            .unwrap_or_default())
    }

    fn run(&self, tree: &FileTree, tests: &BTreeSet<String>, attempt: usize) -> Result<BTreeMap<String, Status>, RunnerError> {
        let Some(state) = self.state(tree) else { return Ok(BTreeMap::new()) };
        Ok(tests
            .iter()
            .filter_map(|t| {
                let seq = state.get(t).filter(|s| !s.is_empty())?;
                let st = seq[attempt % seq.len()];
                (st != Status::Missing).then(|| (t.clone(), st))
            })
            .collect())
    }
}

/// Shells out to a project's own test tooling.
///
/// Templates are split shell-style. `{dir}` expands to the materialized
/// tree, `{attempt}` to the run number and a lone `{tests}` argument to one
/// argument per test id. Output lines of the form `TEST <id> [<status>]`
/// are parsed; everything else is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRunner {
    pub collect: String,
    pub run: String,
}

impl CommandRunner {
    fn invoke(&self, template: &str, tree: &FileTree, tests: &BTreeSet<String>, attempt: usize) -> Result<Vec<(String, Option<Status>)>, RunnerError> {
        let fail = |detail: String| RunnerError::Command { command: template.to_string(), detail };
        let words = shlex::split(template).filter(|w| !w.is_empty()).ok_or_else(|| fail("unbalanced quotes".into()))?;
        let dir = tempfile::Builder::new().prefix("mdag-tree").tempdir()?;
        tree.write_dir(dir.path())?;
        let dir_s = dir.path().to_string_lossy().into_owned();
        let mut argv = Vec::new();
        for w in words {
            if w == "{tests}" {
                argv.extend(tests.iter().cloned());
            } else {
                argv.push(w.replace("{dir}", &dir_s).replace("{attempt}", &attempt.to_string()));
            }
        }
        let out = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(dir.path())
            .output()
            .map_err(|e| fail(e.to_string()))?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        let lines = parse_protocol(&stdout);
        if !out.status.success() && lines.is_empty() {
            return Err(fail(format!("{}: {}", out.status, String::from_utf8_lossy(&out.stderr).trim())));
        }
        Ok(lines)
    }
}

/// Parses `TEST <id> [<status>]` lines.
pub fn parse_protocol(text: &str) -> Vec<(String, Option<Status>)> {
    text.lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            if parts.next()? != "TEST" {
                return None;
            }
            let id = parts.next()?.to_string();
            Some((id, parts.next().and_then(Status::parse)))
        })
        .collect()
}

impl TestRunner for CommandRunner {
    fn collect(&self, tree: &FileTree) -> Result<BTreeSet<String>, RunnerError> {
        Ok(self
            .invoke(&self.collect, tree, &BTreeSet::new(), 0)?
            .into_iter()
            .map(|(id, _)| id)
            .collect())
    }

    fn run(&self, tree: &FileTree, tests: &BTreeSet<String>, attempt: usize) -> Result<BTreeMap<String, Status>, RunnerError> {
        Ok(self
            .invoke(&self.run, tree, tests, attempt)?
            .into_iter()
            .filter(|(id, _)| tests.contains(id))
            .map(|(id, st)| (id, st.unwrap_or(Status::Error)))
            .filter(|(_, st)| *st != Status::Missing)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Blob;

    fn tree(files: &[(&str, &str)]) -> FileTree {
        let mut t = FileTree::default();
        for (p, c) in files {
            t.insert(*p, Blob::text(c));
        }
        t
    }

    #[test]
    fn declarative_checks() {
        let t = tree(&[
            ("src/a.rs", "fn parse() {}\n"),
            (
                "tests/a.check",
                "test parse\n  contains src/a.rs \"fn parse(\"\ntest gone\n  contains src/b.rs \"x\"\ntest clean\n  lacks src/a.rs \"todo\"\n  exists src/a.rs\ntest bad\n  frobnicate\n",
            ),
        ]);
        let r = DeclarativeRunner;
        let ids = r.collect(&t).unwrap();
        assert_eq!(ids.len(), 4);
        let out = r.run(&t, &ids, 0).unwrap();
        assert_eq!(out["a::parse"], Status::Pass);
        assert_eq!(out["a::gone"], Status::Fail);
        assert_eq!(out["a::clean"], Status::Pass);
        assert_eq!(out["a::bad"], Status::Error);
    }

    #[test]
    fn scripted_cycles_through_runs() {
        let r = ScriptedRunner::from_json(r#"{"s1": {"t": ["pass", "fail"], "u": ["missing"]}}"#).unwrap();
        let t = tree(&[(STATE_LABEL_FILE, "s1\n")]);
        let ids = r.collect(&t).unwrap();
        assert_eq!(r.run(&t, &ids, 0).unwrap(), BTreeMap::from([("t".to_string(), Status::Pass)]));
        assert_eq!(r.run(&t, &ids, 3).unwrap()["t"], Status::Fail);
        assert!(r.collect(&tree(&[])).unwrap().is_empty());
    }

    #[test]
    fn protocol_lines() {
        let p = parse_protocol("noise\nTEST a pass\nTEST b FAILED\nTEST c\n");
        assert_eq!(p, vec![("a".into(), Some(Status::Pass)), ("b".into(), Some(Status::Fail)), ("c".into(), None)]);
    }

    #[test]
    fn command_runner_uses_templates() {
        let r = CommandRunner {
            collect: "sh -c 'for f in *.t; do echo TEST ${f%.t}; done'".into(),
            run: "sh -c 'for t in \"$@\"; do if [ -s $t.t ]; then echo TEST $t pass; else echo TEST $t fail; fi; done' sh {tests}".into(),
        };
        let t = tree(&[("a.t", "x"), ("b.t", "")]);
        let ids = r.collect(&t).unwrap();
        assert_eq!(ids, BTreeSet::from(["a".to_string(), "b".to_string()]));
        let out = r.run(&t, &ids, 0).unwrap();
        assert_eq!(out["a"], Status::Pass);
        assert_eq!(out["b"], Status::Fail);
        let broken = CommandRunner { collect: "false".into(), run: "false".into() };
        assert!(matches!(broken.collect(&t), Err(RunnerError::Command { .. })));
    }
}
