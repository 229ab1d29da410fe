//! Lightweight symbol extraction by per-language header patterns.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::history::Commit;
use crate::ids::CommitId;
use crate::vcs::FileDiff;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Function,
    #[serde(rename = "type")]
    Type,
    Method,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolAction {
    Added,
    Modified,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolRef {
    pub path: String,
    pub kind: SymbolKind,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymbolChange {
    pub commit_id: CommitId,
    pub symbol: SymbolRef,
    pub action: SymbolAction,
}

/// Symbol changes plus identifiers referenced by added lines, per commit.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SymbolTable {
    pub changes: Vec<SymbolChange>,
    pub references: BTreeMap<CommitId, BTreeSet<String>>,
}

impl SymbolTable {
    /// Names a commit introduced.
    pub fn added_by<'a>(&'a self, id: &'a CommitId) -> impl Iterator<Item = &'a str> + 'a {
        self.changes
            .iter()
            .filter(move |c| &c.commit_id == id && c.action == SymbolAction::Added)
            .map(|c| c.symbol.name.as_str())
    }
}

struct Lang {
    patterns: Vec<(Regex, SymbolKind)>,
    indent_is_method: bool,
}

fn lang_for(path: &str) -> Option<&'static Lang> {
    static RUST: OnceLock<Lang> = OnceLock::new();
    static PY: OnceLock<Lang> = OnceLock::new();
    static GO: OnceLock<Lang> = OnceLock::new();
    static JS: OnceLock<Lang> = OnceLock::new();
    let ext = path.rsplit_once('.').map(|(_, e)| e)?;
    let re = |s: &str| Regex::new(s).expect("static pattern");
    Some(match ext {
        "rs" => RUST.get_or_init(|| Lang {
            patterns: vec![
                (re(r"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:const\s+)?(?:async\s+)?(?:unsafe\s+)?(?:extern\s+\S+\s+)?fn\s+([A-Za-z_]\w*)"), SymbolKind::Function),
                (re(r"^\s*(?:pub(?:\([^)]*\))?\s+)?(?:struct|enum|trait|union|type)\s+([A-Za-z_]\w*)"), SymbolKind::Type),
            ],
            indent_is_method: true,
        }),
        "py" => PY.get_or_init(|| Lang {
            patterns: vec![
                (re(r"^\s*(?:async\s+)?def\s+([A-Za-z_]\w*)"), SymbolKind::Function),
                (re(r"^\s*class\s+([A-Za-z_]\w*)"), SymbolKind::Type),
            ],
            indent_is_method: true,
        }),
        "go" => GO.get_or_init(|| Lang {
            patterns: vec![
                (re(r"^func\s+\([^)]*\)\s*([A-Za-z_]\w*)"), SymbolKind::Method),
                (re(r"^func\s+([A-Za-z_]\w*)"), SymbolKind::Function),
                (re(r"^type\s+([A-Za-z_]\w*)"), SymbolKind::Type),
            ],
            indent_is_method: false,
        }),
        "js" | "jsx" | "ts" | "tsx" | "mjs" => JS.get_or_init(|| Lang {
            patterns: vec![
                (re(r"^\s*(?:export\s+)?(?:default\s+)?(?:async\s+)?function\s*\*?\s*([A-Za-z_$][\w$]*)"), SymbolKind::Function),
                (re(r"^\s*(?:export\s+)?(?:default\s+)?(?:abstract\s+)?(?:class|interface)\s+([A-Za-z_$][\w$]*)"), SymbolKind::Type),
            ],
            indent_is_method: true,
        }),
        _ => return None,
    })
}

/// `(kind, name) -> body text` for every recognised header in `text`.
fn symbol_bodies(lang: &Lang, text: &str) -> BTreeMap<(SymbolKind, String), String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut headers: Vec<(usize, SymbolKind, String)> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        for (re, kind) in &lang.patterns {
            if let Some(cap) = re.captures(line) {
                let indented = line.starts_with([' ', '\t']);
                let kind = if lang.indent_is_method && indented && *kind == SymbolKind::Function {
                    SymbolKind::Method
                } else {
                    *kind
                };
                headers.push((i, kind, cap[1].to_string()));
                break;
            }
        }
    }
    let mut out: BTreeMap<(SymbolKind, String), String> = BTreeMap::new();
    for (k, (start, kind, name)) in headers.iter().enumerate() {
        let end = headers.get(k + 1).map(|h| h.0).unwrap_or(lines.len());
        let body = lines[*start..end].join("\n");
        out.entry((*kind, name.clone())).or_default().push_str(&body);
    }
    out
}

/// Compares symbol tables of each changed file before and after `commit`.
///
/// `before` and `after` return file text at the first parent and at the
/// commit. Files in unsupported languages or without text are skipped.
pub fn extract_symbol_changes(
    commit: &Commit,
    before: &dyn Fn(&str) -> Option<String>,
    after: &dyn Fn(&str) -> Option<String>,
) -> Vec<SymbolChange> {
    let mut out = BTreeSet::new();
    for fc in &commit.file_changes {
        let Some(lang) = lang_for(&fc.path) else {
            log::debug!("no symbol grammar for {}", fc.path);
            continue;
        };
        let old_path = fc.old_path.as_deref().unwrap_or(&fc.path);
        let old = before(old_path).map(|t| symbol_bodies(lang, &t)).unwrap_or_default();
        let new = after(&fc.path).map(|t| symbol_bodies(lang, &t)).unwrap_or_default();
        let mut emit = |(kind, name): &(SymbolKind, String), action| {
            out.insert(SymbolChange {
                commit_id: commit.id.clone(),
                symbol: SymbolRef { path: fc.path.clone(), kind: *kind, name: name.clone() },
                action,
            });
        };
        for (key, body) in &new {
            match old.get(key) {
                None => emit(key, SymbolAction::Added),
                Some(b) if b != body => emit(key, SymbolAction::Modified),
                Some(_) => {}
            }
        }
        for key in old.keys() {
            if !new.contains_key(key) {
                emit(key, SymbolAction::Deleted);
            }
        }
    }
    out.into_iter().collect()
}

/// Call-like identifiers (`name(`, `::name`, `.name`) and capitalised type
/// names appearing on added lines.
pub fn referenced_identifiers(diffs: &[FileDiff]) -> BTreeSet<String> {
    static CALL: OnceLock<Regex> = OnceLock::new();
    static PATH: OnceLock<Regex> = OnceLock::new();
    static TYPE: OnceLock<Regex> = OnceLock::new();
    let call = CALL.get_or_init(|| Regex::new(r"([A-Za-z_]\w*)\s*\(").unwrap());
    let path = PATH.get_or_init(|| Regex::new(r"(?:::|\.)([A-Za-z_]\w*)").unwrap());
    let ty = TYPE.get_or_init(|| Regex::new(r"\b([A-Z][A-Za-z0-9_]*)\b").unwrap());
    let mut out = BTreeSet::new();
    for fd in diffs {
        for h in &fd.hunks {
            for line in &h.added {
                for re in [call, path, ty] {
                    for cap in re.captures_iter(line) {
                        out.insert(cap[1].to_string());
                    }
                }
            }
        }
    }
    out
}
