use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use tempfile::TempDir;

use super::{BlameLine, FileDiff, Hunk, VcsAdapter, VcsError};
use crate::history::{parse_linked_refs, ChangeKind, Commit, FileChange};
use crate::ids::CommitId;
use crate::tree::{Blob, FileTree};

const EMPTY_TREE: &str = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

/// A repository accessed through the `git` executable.
#[derive(Debug, Clone)]
pub struct GitRepo {
    root: PathBuf,
}

pub(crate) fn git_command(dir: &Path) -> Command {
    let mut cmd = Command::new("git");
    cmd.current_dir(dir)
        .env("LC_ALL", "C")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_TERMINAL_PROMPT", "0")
        .args(["-c", "core.quotepath=off", "-c", "color.ui=never"]);
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Result<Output, VcsError> {
    Ok(git_command(dir).args(args).stdin(Stdio::null()).output()?)
}

fn run_ok(dir: &Path, args: &[&str]) -> Result<Vec<u8>, VcsError> {
    let out = run(dir, args)?;
    if out.status.success() {
        Ok(out.stdout)
    } else {
        Err(VcsError::Command {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        })
    }
}

fn run_text(dir: &Path, args: &[&str]) -> Result<String, VcsError> {
    String::from_utf8(run_ok(dir, args)?).map_err(|e| VcsError::Parse(e.to_string()))
}

fn parse_id(s: &str) -> Result<CommitId, VcsError> {
    CommitId::parse(s).map_err(|e| VcsError::Parse(e.to_string()))
}

impl GitRepo {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, VcsError> {
        let root = root.into();
        run_ok(&root, &["rev-parse", "--git-dir"])?;
        Ok(GitRepo { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn parent_rev(&self, id: &CommitId) -> Result<String, VcsError> {
        let parents = run_text(&self.root, &["rev-list", "--parents", "-n", "1", id.as_str()])?;
        Ok(parents
            .split_whitespace()
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| EMPTY_TREE.to_string()))
    }

    /// Starts a throwaway replay clone checked out at `base`.
    pub fn replay_from(&self, base: &CommitId) -> Result<GitReplay, VcsError> {
        let dir = tempfile::Builder::new().prefix("mdag-replay").tempdir()?;
        let src = self.root.to_string_lossy().into_owned();
        let dst = dir.path().join("repo");
        let dst_s = dst.to_string_lossy().into_owned();
        run_ok(
            dir.path(),
            &["clone", "--quiet", "--shared", "--no-checkout", &src, &dst_s],
        )?;
        run_ok(&dst, &["checkout", "--quiet", "--detach", base.as_str()])?;
        Ok(GitReplay {
            _dir: dir,
            repo: GitRepo { root: dst },
        })
    }

    fn changes(&self, id: &CommitId, parent: &str) -> Result<Vec<FileChange>, VcsError> {
        let status = run_ok(
            &self.root,
            &["diff-tree", "-r", "-M", "--no-commit-id", "--name-status", "-z", parent, id.as_str()],
        )?;
        let numstat = run_ok(
            &self.root,
            &["diff-tree", "-r", "-M", "--no-commit-id", "--numstat", "-z", parent, id.as_str()],
        )?;
        let mut changes = parse_name_status(&status)?;
        let counts = parse_numstat(&numstat)?;
        for c in &mut changes {
            if let Some((_, a, r)) = counts.iter().find(|(p, _, _)| p == &c.path) {
                c.added_lines = *a;
                c.removed_lines = *r;
            }
        }
        Ok(changes)
    }
}

fn split_z(bytes: &[u8]) -> Vec<String> {
    bytes
        .split(|b| *b == 0)
        .filter(|s| !s.is_empty())
        .map(|s| String::from_utf8_lossy(s).into_owned())
        .collect()
}

fn parse_name_status(bytes: &[u8]) -> Result<Vec<FileChange>, VcsError> {
    let fields = split_z(bytes);
    let mut out = Vec::new();
    let mut i = 0;
    while i < fields.len() {
        let status = &fields[i];
        let code = status.chars().next().unwrap_or('?');
        let take = |k: usize| {
            fields
                .get(i + k)
                .cloned()
                .ok_or_else(|| VcsError::Parse(format!("truncated name-status after {status}")))
        };
        match code {
            'R' | 'C' => {
                let old = take(1)?;
                let new = take(2)?;
                out.push(FileChange {
                    path: new,
                    old_path: if code == 'R' { Some(old) } else { None },
                    kind: if code == 'R' { ChangeKind::Rename } else { ChangeKind::Add },
                    added_lines: 0,
                    removed_lines: 0,
                });
                i += 3;
            }
            _ => {
                let kind = match code {
                    'A' => ChangeKind::Add,
                    'D' => ChangeKind::Delete,
                    _ => ChangeKind::Modify,
                };
                out.push(FileChange {
                    path: take(1)?,
                    old_path: None,
                    kind,
                    added_lines: 0,
                    removed_lines: 0,
                });
                i += 2;
            }
        }
    }
    Ok(out)
}

/// `(new path, added, removed)` per file; binary files count as zero.
fn parse_numstat(bytes: &[u8]) -> Result<Vec<(String, u64, u64)>, VcsError> {
    let fields = split_z(bytes);
    let mut out = Vec::new();
    let mut i = 0;
    while i < fields.len() {
        let mut parts = fields[i].splitn(3, '\t');
        let a = parts.next().unwrap_or("-").parse().unwrap_or(0);
        let r = parts.next().unwrap_or("-").parse().unwrap_or(0);
        let path = parts.next().unwrap_or("");
        if path.is_empty() {
            // rename: paths follow as two separate fields
            let new = fields
                .get(i + 2)
                .cloned()
                .ok_or_else(|| VcsError::Parse("truncated numstat rename".into()))?;
            out.push((new, a, r));
            i += 3;
        } else {
            out.push((path.to_string(), a, r));
            i += 1;
        }
    }
    Ok(out)
}

fn parse_hunk_header(line: &str) -> Option<(u32, u32, u32, u32)> {
    // @@ -a[,b] +c[,d] @@
    let body = line.strip_prefix("@@ -")?;
    let end = body.find(" @@")?;
    let mut sides = body[..end].split(" +");
    let parse = |s: &str| -> Option<(u32, u32)> {
        let mut it = s.split(',');
        let start = it.next()?.parse().ok()?;
        let len = it.next().map(|l| l.parse().ok()).unwrap_or(Some(1))?;
        Some((start, len))
    };
    let (os, ol) = parse(sides.next()?)?;
    let (ns, nl) = parse(sides.next()?)?;
    Some((os, ol, ns, nl))
}

pub(crate) fn parse_unified_diff(text: &str) -> Vec<FileDiff> {
    let mut files = Vec::new();
    let mut cur: Option<FileDiff> = None;
    let mut hunk: Option<Hunk> = None;
    let flush_hunk = |cur: &mut Option<FileDiff>, hunk: &mut Option<Hunk>| {
        if let (Some(f), Some(h)) = (cur.as_mut(), hunk.take()) {
            f.hunks.push(h);
        }
    };
    for line in text.lines() {
        if line.starts_with("diff --git ") {
            flush_hunk(&mut cur, &mut hunk);
            if let Some(f) = cur.take() {
                files.push(f);
            }
            let mut f = FileDiff::default();
            // fallback for diffs without ---/+++ lines (pure renames, mode changes)
            if let Some(rest) = line.strip_prefix("diff --git a/") {
                if let Some(idx) = rest.find(" b/") {
                    f.old_path = Some(rest[..idx].to_string());
                    f.new_path = Some(rest[idx + 3..].to_string());
                }
            }
            cur = Some(f);
        } else if let Some(f) = cur.as_mut() {
            if hunk.is_none() {
                if line.starts_with("new file mode") {
                    f.old_path = None;
                } else if line.starts_with("deleted file mode") {
                    f.new_path = None;
                } else if let Some(p) = line.strip_prefix("rename from ") {
                    f.old_path = Some(p.to_string());
                } else if let Some(p) = line.strip_prefix("rename to ") {
                    f.new_path = Some(p.to_string());
                } else if let Some(p) = line.strip_prefix("--- ") {
                    f.old_path = p.strip_prefix("a/").map(str::to_string);
                    continue;
                } else if let Some(p) = line.strip_prefix("+++ ") {
                    f.new_path = p.strip_prefix("b/").map(str::to_string);
                    continue;
                }
            }
            if line.starts_with("@@ ") {
                flush_hunk(&mut cur, &mut hunk);
                if let Some((os, ol, ns, nl)) = parse_hunk_header(line) {
                    hunk = Some(Hunk {
                        old_start: os,
                        old_len: ol,
                        new_start: ns,
                        new_len: nl,
                        ..Hunk::default()
                    });
                }
            } else if let Some(h) = hunk.as_mut() {
                if let Some(l) = line.strip_prefix('+') {
                    h.added.push(l.to_string());
                } else if let Some(l) = line.strip_prefix('-') {
                    h.removed.push(l.to_string());
                }
            }
        }
    }
    flush_hunk(&mut cur, &mut hunk);
    if let Some(f) = cur.take() {
        files.push(f);
    }
    files
}

pub(crate) fn parse_blame_porcelain(text: &str, path: &str) -> Result<Vec<BlameLine>, VcsError> {
    let mut out = Vec::new();
    let mut filenames: std::collections::HashMap<String, String> = Default::default();
    let mut current: Option<String> = None;
    let mut expect_header = true;
    for line in text.lines() {
        if let Some(_content) = line.strip_prefix('\t') {
            let sha = current
                .clone()
                .ok_or_else(|| VcsError::Parse("blame content before header".into()))?;
            let orig_path = filenames.get(&sha).cloned().unwrap_or_else(|| path.to_string());
            out.push(BlameLine {
                commit: parse_id(&sha)?,
                orig_path,
            });
            expect_header = true;
        } else if expect_header {
            let sha = line
                .split_whitespace()
                .next()
                .ok_or_else(|| VcsError::Parse("empty blame header".into()))?;
            current = Some(sha.to_string());
            expect_header = false;
        } else if let Some(name) = line.strip_prefix("filename ") {
            if let Some(sha) = &current {
                filenames.insert(sha.clone(), name.to_string());
            }
        }
    }
    Ok(out)
}

impl VcsAdapter for GitRepo {
    fn resolve(&self, rev: &str) -> Result<CommitId, VcsError> {
        let spec = format!("{rev}^{{commit}}");
        match run(&self.root, &["rev-parse", "--verify", "--quiet", &spec])? {
            out if out.status.success() => parse_id(&String::from_utf8_lossy(&out.stdout)),
            _ => Err(VcsError::Unresolved(rev.to_string())),
        }
    }

    fn branch_exists(&self, name: &str) -> bool {
        let r = format!("refs/heads/{name}");
        run(&self.root, &["show-ref", "--verify", "--quiet", &r])
            .map(|o| o.status.success())
            .unwrap_or(false)
    }

    fn merge_base(&self, a: &CommitId, b: &CommitId) -> Result<Option<CommitId>, VcsError> {
        let out = run(&self.root, &["merge-base", a.as_str(), b.as_str()])?;
        match out.status.code() {
            Some(0) => Ok(Some(parse_id(&String::from_utf8_lossy(&out.stdout))?)),
            Some(1) => Ok(None),
            _ => Err(VcsError::Command {
                args: "merge-base".into(),
                stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
            }),
        }
    }

    fn first_parent_log(&self, from: &CommitId, to: &CommitId) -> Result<Vec<CommitId>, VcsError> {
        let range = format!("{from}..{to}");
        run_text(&self.root, &["rev-list", "--first-parent", "--reverse", &range])?
            .lines()
            .map(parse_id)
            .collect()
    }

    fn commit(&self, id: &CommitId) -> Result<Commit, VcsError> {
        let raw = run_ok(
            &self.root,
            &["show", "-s", "--format=%H%x00%P%x00%an%x00%at%x00%B", id.as_str()],
        )?;
        let text = String::from_utf8_lossy(&raw);
        let mut parts = text.splitn(5, '\0');
        let mut next = || {
            parts
                .next()
                .ok_or_else(|| VcsError::Parse(format!("short commit record for {id}")))
        };
        let cid = parse_id(next()?)?;
        let parent_ids = next()?
            .split_whitespace()
            .map(parse_id)
            .collect::<Result<Vec<_>, _>>()?;
        let author = next()?.to_string();
        let timestamp = next()?
            .trim()
            .parse()
            .map_err(|_| VcsError::Parse("bad timestamp".into()))?;
        let message = next()?.trim_end().to_string();
        let parent = parent_ids
            .first()
            .map(|p| p.to_string())
            .unwrap_or_else(|| EMPTY_TREE.to_string());
        let file_changes = self.changes(&cid, &parent)?;
        Ok(Commit {
            linked_refs: parse_linked_refs(&message),
            id: cid,
            parent_ids,
            author,
            timestamp,
            message,
            file_changes,
        })
    }

    fn diff(&self, id: &CommitId) -> Result<Vec<FileDiff>, VcsError> {
        let parent = self.parent_rev(id)?;
        let text = run_ok(
            &self.root,
            &["diff", "-U0", "-M", "--no-color", "--no-ext-diff", &parent, id.as_str()],
        )?;
        Ok(parse_unified_diff(&String::from_utf8_lossy(&text)))
    }

    fn blame(&self, path: &str, at: &CommitId) -> Result<Vec<BlameLine>, VcsError> {
        let text = run_text(&self.root, &["blame", "--porcelain", at.as_str(), "--", path])?;
        parse_blame_porcelain(&text, path)
    }

    fn read_file(&self, at: &CommitId, path: &str) -> Result<Option<Vec<u8>>, VcsError> {
        let spec = format!("{at}:{path}");
        let out = run(&self.root, &["cat-file", "blob", &spec])?;
        Ok(out.status.success().then_some(out.stdout))
    }

    fn read_tree(&self, rev: &str) -> Result<FileTree, VcsError> {
        let listing = run_ok(&self.root, &["ls-tree", "-r", "-z", "--full-tree", rev])?;
        let mut entries = Vec::new();
        for rec in split_z(&listing) {
            let (meta, path) = rec
                .split_once('\t')
                .ok_or_else(|| VcsError::Parse(format!("ls-tree record {rec:?}")))?;
            let mut m = meta.split_whitespace();
            let (_mode, kind, sha) = (m.next(), m.next(), m.next());
            if kind == Some("blob") {
                entries.push((path.to_string(), sha.unwrap_or_default().to_string()));
            }
        }
        let mut child = git_command(&self.root)
            .args(["cat-file", "--batch"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let request: String = entries.iter().map(|(_, sha)| format!("{sha}\n")).collect();
        let writer = std::thread::spawn(move || stdin.write_all(request.as_bytes()));
        let mut data = Vec::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_end(&mut data)?;
        child.wait()?;
        writer
            .join()
            .map_err(|_| VcsError::Parse("cat-file writer panicked".into()))??;
        let mut tree = FileTree::default();
        let mut pos = 0;
        for (path, _) in entries {
            let nl = data[pos..]
                .iter()
                .position(|b| *b == b'\n')
                .ok_or_else(|| VcsError::Parse("cat-file header".into()))?;
            let header = String::from_utf8_lossy(&data[pos..pos + nl]).into_owned();
            let size: usize = header
                .split_whitespace()
                .nth(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| VcsError::Parse(format!("cat-file header {header:?}")))?;
            let start = pos + nl + 1;
            tree.insert(path, Blob(data[start..start + size].to_vec()));
            pos = start + size + 1;
        }
        Ok(tree)
    }

    fn tree_id(&self, rev: &str) -> Result<String, VcsError> {
        let spec = format!("{rev}^{{tree}}");
        Ok(run_text(&self.root, &["rev-parse", &spec])?.trim().to_string())
    }
}

/// Scratch clone used to cherry-pick commits in a new order.
pub struct GitReplay {
    _dir: TempDir,
    repo: GitRepo,
}

impl GitReplay {
    /// Cherry-picks `id` onto the current head. On conflict the pick is
    /// aborted and the conflicting paths are returned.
    pub fn pick(&self, id: &CommitId, is_merge: bool) -> Result<Result<(), Vec<String>>, VcsError> {
        let mut args = vec![
            "-c",
            "user.name=mdag",
            "-c",
            "user.email=mdag@localhost",
            "cherry-pick",
            "--allow-empty",
            "--keep-redundant-commits",
            "--no-rerere-autoupdate",
        ];
        if is_merge {
            args.extend(["-m", "1"]);
        }
        args.push(id.as_str());
        let out = git_command(&self.repo.root)
            .args(&args)
            .env("GIT_COMMITTER_DATE", "1700000000 +0000")
            .stdin(Stdio::null())
            .output()?;
        if out.status.success() {
            return Ok(Ok(()));
        }
        let unmerged = run_text(&self.repo.root, &["diff", "--name-only", "--diff-filter=U"])?;
        let mut paths: Vec<String> = unmerged.lines().map(str::to_string).collect();
        if paths.is_empty() {
            paths.push(String::from_utf8_lossy(&out.stderr).trim().to_string());
        }
        let _ = run(&self.repo.root, &["cherry-pick", "--abort"]);
        Ok(Err(paths))
    }

    pub fn head_tree(&self) -> Result<String, VcsError> {
        self.repo.tree_id("HEAD")
    }

    pub fn read_tree(&self, rev: &str) -> Result<FileTree, VcsError> {
        self.repo.read_tree(rev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_zero_context_diff() {
        let text = "diff --git a/f b/f\nindex 1..2 100644\n--- a/f\n+++ b/f\n@@ -2 +2 @@\n-old\n+new\n@@ -5,0 +6,2 @@\n+a\n+b\ndiff --git a/g b/h\nsimilarity index 100%\nrename from g\nrename to h\n";
        let files = parse_unified_diff(text);
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].hunks.len(), 2);
        assert_eq!((files[0].hunks[0].old_start, files[0].hunks[0].old_len), (2, 1));
        assert_eq!(files[0].hunks[1].old_len, 0);
        assert_eq!(files[0].hunks[1].added, vec!["a", "b"]);
        assert_eq!(files[1].old_path.as_deref(), Some("g"));
        assert_eq!(files[1].new_path.as_deref(), Some("h"));
    }

    #[test]
    fn parses_new_and_deleted_files() {
        let text = "diff --git a/n b/n\nnew file mode 100644\n--- /dev/null\n+++ b/n\n@@ -0,0 +1 @@\n+x\ndiff --git a/d b/d\ndeleted file mode 100644\n--- a/d\n+++ /dev/null\n@@ -1 +0,0 @@\n-y\n";
        let files = parse_unified_diff(text);
        assert_eq!(files[0].old_path, None);
        assert_eq!(files[0].new_path.as_deref(), Some("n"));
        assert_eq!(files[1].new_path, None);
        assert_eq!(files[1].hunks[0].removed, vec!["y"]);
    }

    #[test]
    fn name_status_and_numstat() {
        let ns = b"M\0src/a\0R100\0old\0new\0A\0b\0";
        let ch = parse_name_status(ns).unwrap();
        assert_eq!(ch.len(), 3);
        assert_eq!(ch[1].kind, ChangeKind::Rename);
        assert_eq!(ch[1].old_path.as_deref(), Some("old"));
        let nums = parse_numstat(b"1\t2\tsrc/a\x000\t0\t\0old\0new\0-\t-\tb\0").unwrap();
        assert_eq!(nums, vec![("src/a".into(), 1, 2), ("new".into(), 0, 0), ("b".into(), 0, 0)]);
    }
}
