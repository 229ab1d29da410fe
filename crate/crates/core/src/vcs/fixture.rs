//! Deterministic synthetic git repositories.
//!
//! Author, committer and dates are pinned so the same script always produces
//! the same commit ids. Used by the test suites and by `mdag make-fixture`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Stdio;

use super::git::git_command;
use super::{GitRepo, VcsError};
use crate::ids::CommitId;

pub const EPOCH: i64 = 1_700_000_000;
const STEP: i64 = 6 * 3600;

pub struct FixtureRepo {
    root: PathBuf,
    clock: i64,
    author: String,
}

impl FixtureRepo {
    pub fn init(root: impl Into<PathBuf>) -> Result<Self, VcsError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let repo = FixtureRepo {
            root,
            clock: EPOCH,
            author: "Ada".into(),
        };
        repo.git(&["init", "--quiet", "-b", "main"])?;
        Ok(repo)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn repo(&self) -> GitRepo {
        GitRepo::open(&self.root).expect("fixture is a git repository")
    }

    fn git(&self, args: &[&str]) -> Result<String, VcsError> {
        let date = format!("{} +0000", self.clock);
        let email = format!("{}@example.com", self.author.to_lowercase());
        let out = git_command(&self.root)
            .args(args)
            .env("GIT_AUTHOR_NAME", &self.author)
            .env("GIT_AUTHOR_EMAIL", &email)
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_NAME", &self.author)
            .env("GIT_COMMITTER_EMAIL", &email)
            .env("GIT_COMMITTER_DATE", &date)
            .stdin(Stdio::null())
            .output()?;
        if !out.status.success() {
            return Err(VcsError::Command {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            });
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }

    pub fn set_author(&mut self, name: &str) -> &mut Self {
        self.author = name.to_string();
        self
    }

    pub fn write(&mut self, path: &str, content: &str) -> &mut Self {
        let full = self.root.join(path);
        fs::create_dir_all(full.parent().expect("relative path has a parent")).unwrap();
        fs::write(full, content).unwrap();
        self
    }

    pub fn remove(&mut self, path: &str) -> &mut Self {
        fs::remove_file(self.root.join(path)).unwrap();
        self
    }

    pub fn rename(&mut self, from: &str, to: &str) -> &mut Self {
        let dst = self.root.join(to);
        fs::create_dir_all(dst.parent().unwrap()).unwrap();
        fs::rename(self.root.join(from), dst).unwrap();
        self
    }

    pub fn commit(&mut self, message: &str) -> Result<CommitId, VcsError> {
        self.clock += STEP;
        self.git(&["add", "-A"])?;
        self.git(&["commit", "--quiet", "--allow-empty", "-m", message])?;
        self.head()
    }

    pub fn head(&self) -> Result<CommitId, VcsError> {
        CommitId::parse(&self.git(&["rev-parse", "HEAD"])?).map_err(|e| VcsError::Parse(e.to_string()))
    }

    pub fn tag(&mut self, name: &str) -> Result<(), VcsError> {
        self.git(&["tag", name]).map(drop)
    }

    pub fn branch(&mut self, name: &str) -> Result<(), VcsError> {
        self.git(&["checkout", "--quiet", "-b", name]).map(drop)
    }

    pub fn checkout(&mut self, name: &str) -> Result<(), VcsError> {
        self.git(&["checkout", "--quiet", name]).map(drop)
    }

    pub fn merge_no_ff(&mut self, branch: &str, message: &str) -> Result<CommitId, VcsError> {
        self.clock += STEP;
        self.git(&["merge", "--quiet", "--no-ff", "-m", message, branch])?;
        self.head()
    }
}

/// A generated scenario and the tags bounding its range.
pub struct Scenario {
    pub fixture: FixtureRepo,
    pub start_tag: String,
    pub end_tag: String,
}

fn lines(items: &[&str]) -> String {
    let mut s = items.join("\n");
    s.push('\n');
    s
}

/// `main = root(v1) -> c1 -> c2 -> c3 -> c4(v2)`, one module edited in place.
pub fn linear(dir: &Path) -> Result<Scenario, VcsError> {
    let mut f = FixtureRepo::init(dir)?;
    f.write("README.md", "demo\n").write("src/lib.rs", "pub mod math;\n");
    f.write("src/math.rs", "// math\n");
    f.commit("Initial layout")?;
    f.tag("v1")?;
    f.write(
        "src/math.rs",
        &lines(&["// math", "pub fn add(a: i32, b: i32) -> i32 {", "    a + b", "}"]),
    )
    .write("tests/math.check", &lines(&["test add", "  contains src/math.rs \"fn add(\""]));
    f.commit("math: add addition")?;
    f.write(
        "src/math.rs",
        &lines(&[
            "// math",
            "pub fn add(a: i32, b: i32) -> i32 {",
            "    a + b",
            "}",
            "pub fn sub(a: i32, b: i32) -> i32 {",
            "    a - b",
            "}",
        ]),
    )
    .write(
        "tests/math.check",
        &lines(&[
            "test add",
            "  contains src/math.rs \"fn add(\"",
            "test sub",
            "  contains src/math.rs \"fn sub(\"",
        ]),
    );
    f.commit("math: add subtraction")?;
    f.write(
        "src/math.rs",
        &lines(&[
            "// math",
            "pub fn add(a: i32, b: i32) -> i32 {",
            "    a.wrapping_add(b)",
            "}",
            "pub fn sub(a: i32, b: i32) -> i32 {",
            "    a - b",
            "}",
        ]),
    );
    f.commit("math: wrapping addition")?;
    f.write("README.md", "demo\n\nmath helpers\n");
    f.commit("Document math helpers")?;
    f.tag("v2")?;
    Ok(Scenario { fixture: f, start_tag: "v1".into(), end_tag: "v2".into() })
}

/// Two features on disjoint files whose commits alternate in time.
pub fn interleaved(dir: &Path) -> Result<Scenario, VcsError> {
    let mut f = FixtureRepo::init(dir)?;
    f.write("src/lib.rs", "pub mod auth;\npub mod store;\n")
        .write("src/auth.rs", "// auth\n")
        .write("src/store.rs", "// store\n");
    f.commit("Initial layout")?;
    f.tag("v1")?;
    let auth = [
        vec!["// auth", "pub fn login(user: &str) -> bool {", "    !user.is_empty()", "}"],
        vec!["// auth", "pub fn login(user: &str) -> bool {", "    user.len() > 2", "}"],
        vec![
            "// auth",
            "pub fn login(user: &str) -> bool {",
            "    user.len() > 2",
            "}",
            "pub fn logout() {}",
        ],
    ];
    let store = [
        vec!["// store", "pub fn put(k: &str) {", "    let _ = k;", "}"],
        vec!["// store", "pub fn put(k: &str) {", "    drop(k.to_owned());", "}"],
        vec![
            "// store",
            "pub fn put(k: &str) {",
            "    drop(k.to_owned());",
            "}",
            "pub fn get() -> Option<String> { None }",
        ],
    ];
    for i in 0..3 {
        f.set_author("Ada");
        f.write("src/auth.rs", &lines(&auth[i]))
            .write("tests/auth.check", &format!("test login{i}\n  contains src/auth.rs \"fn login(\"\n"));
        f.commit(&format!("auth: session login step {i}"))?;
        f.set_author("Brian");
        f.write("src/store.rs", &lines(&store[i]))
            .write("tests/store.check", &format!("test put{i}\n  contains src/store.rs \"fn put(\"\n"));
        f.commit(&format!("store: persistence put step {i}"))?;
    }
    f.tag("v2")?;
    Ok(Scenario { fixture: f, start_tag: "v1".into(), end_tag: "v2".into() })
}

/// `A -> {B, C} -> D` through line edits.
pub fn diamond(dir: &Path) -> Result<Scenario, VcsError> {
    let mut f = FixtureRepo::init(dir)?;
    f.write("src/lib.rs", "pub mod core;\n");
    f.commit("Initial layout")?;
    f.tag("v1")?;
    f.write(
        "src/core.rs",
        &lines(&["pub fn left() -> u8 {", "    1", "}", "pub fn right() -> u8 {", "    2", "}"]),
    );
    f.commit("core: add left and right")?;
    f.write(
        "src/core.rs",
        &lines(&["pub fn left() -> u8 {", "    10", "}", "pub fn right() -> u8 {", "    2", "}"]),
    )
    .write("src/left.rs", &lines(&["pub fn l() -> u8 {", "    crate::core::left()", "}"]));
    f.commit("left: scale left")?;
    f.write(
        "src/core.rs",
        &lines(&["pub fn left() -> u8 {", "    10", "}", "pub fn right() -> u8 {", "    20", "}"]),
    )
    .write("src/right.rs", &lines(&["pub fn r() -> u8 {", "    crate::core::right()", "}"]));
    f.commit("right: scale right")?;
    f.write("src/left.rs", &lines(&["pub fn l() -> u8 {", "    crate::core::left() + 1", "}"]))
        .write("src/right.rs", &lines(&["pub fn r() -> u8 {", "    crate::core::right() + 1", "}"]));
    f.commit("join: offset both sides")?;
    f.tag("v2")?;
    Ok(Scenario { fixture: f, start_tag: "v1".into(), end_tag: "v2".into() })
}

/// Multi-theme repository exercising the whole pipeline.
///
/// Three themes (parser, render, shell) with symbol references between them,
/// a test-only commit that pre-registers failing tests, a docs-only commit,
/// a merged feature branch (storage), and an out-of-range commit after `v2`.
pub fn synthetic(dir: &Path) -> Result<Scenario, VcsError> {
    let mut f = FixtureRepo::init(dir)?;
    f.write("README.md", "toy language\n")
        .write("src/lib.rs", "// toy\n")
        .write("Cargo.toml", "[package]\nname = \"toy\"\n");
    f.commit("Initial layout")?;
    f.tag("v1")?;

    // parser theme
    f.set_author("Ada");
    f.write(
        "src/parser.rs",
        &lines(&["pub fn parse(src: &str) -> Vec<String> {", "    src.split(' ').map(String::from).collect()", "}"]),
    )
    .write("tests/parser.check", &lines(&["test parse", "  contains src/parser.rs \"fn parse(\""]));
    f.commit("parser: tokenize input into words")?;

    f.write(
        "tests/parser.check",
        &lines(&[
            "test parse",
            "  contains src/parser.rs \"fn parse(\"",
            "test parse_expr",
            "  contains src/parser.rs \"fn parse_expr(\"",
            "test parse_trim",
            "  contains src/parser.rs \"trim()\"",
        ]),
    );
    f.commit("parser tests: expression grammar")?;

    f.write(
        "src/parser.rs",
        &lines(&[
            "pub fn parse(src: &str) -> Vec<String> {",
            "    src.trim().split(' ').map(String::from).collect()",
            "}",
            "pub fn parse_expr(src: &str) -> usize {",
            "    parse(src).len()",
            "}",
        ]),
    );
    f.commit("parser: expression grammar and trimming")?;

    // render theme, calls into the parser
    f.set_author("Brian");
    f.write(
        "src/render.rs",
        &lines(&["pub fn render(src: &str) -> String {", "    crate::parser::parse(src).join(\",\")", "}"]),
    )
    .write("tests/render.check", &lines(&["test render", "  contains src/render.rs \"fn render(\""]));
    f.commit("render: comma layout output")?;

    f.write("README.md", "toy language\n\nparse and render\n");
    f.commit("docs: describe usage")?;

    f.write(
        "src/render.rs",
        &lines(&[
            "pub fn render(src: &str) -> String {",
            "    crate::parser::parse(src).join(\", \")",
            "}",
            "pub fn render_html(src: &str) -> String {",
            "    format!(\"<p>{}</p>\", render(src))",
            "}",
        ]),
    )
    .write(
        "tests/render.check",
        &lines(&[
            "test render",
            "  contains src/render.rs \"fn render(\"",
            "test render_html",
            "  contains src/render.rs \"fn render_html(\"",
        ]),
    );
    f.commit("render: html layout output")?;

    // storage feature branch merged with --no-ff
    f.branch("feat/store")?;
    f.set_author("Chen");
    f.write("src/store.rs", &lines(&["pub fn save(doc: &str) -> usize {", "    doc.len()", "}"]))
        .write("tests/store.check", &lines(&["test save", "  contains src/store.rs \"fn save(\""]));
    f.commit("store: persist documents")?;
    f.write(
        "src/store.rs",
        &lines(&["pub fn save(doc: &str) -> usize {", "    doc.trim().len()", "}", "pub fn load() -> String { String::new() }"]),
    )
    .write(
        "tests/store.check",
        &lines(&["test save", "  contains src/store.rs \"fn save(\"", "test load", "  contains src/store.rs \"fn load(\""]),
    );
    f.commit("store: load documents")?;
    f.checkout("main")?;
    f.merge_no_ff("feat/store", "Merge branch 'feat/store' (#4)")?;

    // shell theme, calls into render
    f.set_author("Ada");
    f.write(
        "src/shell.rs",
        &lines(&["pub fn run(line: &str) -> String {", "    crate::render::render(line)", "}"]),
    )
    .write("tests/shell.check", &lines(&["test run", "  contains src/shell.rs \"fn run(\""]));
    f.commit("shell: interactive command loop")?;
    f.write(
        "src/shell.rs",
        &lines(&[
            "pub fn run(line: &str) -> String {",
            "    crate::render::render_html(line)",
            "}",
            "pub fn prompt() -> &'static str { \"> \" }",
        ]),
    )
    .write(
        "tests/shell.check",
        &lines(&["test run", "  contains src/shell.rs \"fn run(\"", "test prompt", "  contains src/shell.rs \"fn prompt(\""]),
    );
    f.commit("shell: command prompt loop with html")?;

    f.write(
        "src/lib.rs",
        &lines(&["// toy", "pub mod parser;", "pub mod render;", "pub mod shell;", "pub mod store;"]),
    );
    f.commit("lib: export modules")?;
    f.tag("v2")?;

    f.write("src/late.rs", "pub fn late() {}\n");
    f.commit("late: outside the range")?;
    Ok(Scenario { fixture: f, start_tag: "v1".into(), end_tag: "v2".into() })
}

/// Looks a scenario up by name.
pub fn by_name(name: &str, dir: &Path) -> Option<Result<Scenario, VcsError>> {
    match name {
        "linear" => Some(linear(dir)),
        "interleaved" => Some(interleaved(dir)),
        "diamond" => Some(diamond(dir)),
        "synthetic" => Some(synthetic(dir)),
        _ => None,
    }
}

pub const SCENARIOS: &[&str] = &["linear", "interleaved", "diamond", "synthetic"];
