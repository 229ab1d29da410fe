//! In-memory file trees and whole-file patches.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// File contents that serialize as a plain string when valid UTF-8 and as
/// `{"base64": ...}` otherwise.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Blob(pub Vec<u8>);

impl Blob {
    pub fn text(s: &str) -> Self {
        Blob(s.as_bytes().to_vec())
    }

    pub fn as_text(&self) -> Option<&str> {
        std::str::from_utf8(&self.0).ok()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BlobRepr {
    Text(String),
    Binary { base64: String },
}

impl Serialize for Blob {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match std::str::from_utf8(&self.0) {
            Ok(t) => BlobRepr::Text(t.to_string()).serialize(s),
            Err(_) => BlobRepr::Binary {
                base64: base64::engine::general_purpose::STANDARD.encode(&self.0),
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Blob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match BlobRepr::deserialize(d)? {
            BlobRepr::Text(t) => Ok(Blob(t.into_bytes())),
            BlobRepr::Binary { base64 } => base64::engine::general_purpose::STANDARD
                .decode(base64)
                .map(Blob)
                .map_err(serde::de::Error::custom),
        }
    }
}

/// A snapshot of a working tree: repository-relative path to contents.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileTree(pub BTreeMap<String, Blob>);

/// Whole-file changes: `Some` writes the file, `None` deletes it.
#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Patch(pub BTreeMap<String, Option<Blob>>);

impl FileTree {
    pub fn get(&self, path: &str) -> Option<&Blob> {
        self.0.get(path)
    }

    pub fn get_text(&self, path: &str) -> Option<&str> {
        self.0.get(path).and_then(Blob::as_text)
    }

    pub fn insert(&mut self, path: impl Into<String>, blob: Blob) {
        self.0.insert(path.into(), blob);
    }

    pub fn remove(&mut self, path: &str) -> Option<Blob> {
        self.0.remove(path)
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// SHA-256 over sorted `(path, length, bytes)` records.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (path, blob) in &self.0 {
            h.update(path.as_bytes());
            h.update([0u8]);
            h.update((blob.0.len() as u64).to_le_bytes());
            h.update(&blob.0);
        }
        hex::encode(h.finalize())
    }

    pub fn apply(&mut self, patch: &Patch) {
        for (path, change) in &patch.0 {
            match change {
                Some(blob) => {
                    self.0.insert(path.clone(), blob.clone());
                }
                None => {
                    self.0.remove(path);
                }
            }
        }
    }

    /// Patch that turns `self` into `other`.
    pub fn diff(&self, other: &FileTree) -> Patch {
        let mut out = BTreeMap::new();
        for (path, blob) in &other.0 {
            if self.0.get(path) != Some(blob) {
                out.insert(path.clone(), Some(blob.clone()));
            }
        }
        for path in self.0.keys() {
            if !other.0.contains_key(path) {
                out.insert(path.clone(), None);
            }
        }
        Patch(out)
    }

    /// Reads every regular file under `root`, skipping `.git`.
    pub fn read_dir(root: &Path) -> io::Result<FileTree> {
        let mut tree = FileTree::default();
        read_into(root, root, &mut tree)?;
        Ok(tree)
    }

    /// Replaces the contents of `root` with this tree.
    pub fn write_dir(&self, root: &Path) -> io::Result<()> {
        if root.exists() {
            for entry in fs::read_dir(root)? {
                let entry = entry?;
                if entry.file_name() == ".git" {
                    continue;
                }
                let p = entry.path();
                if entry.file_type()?.is_dir() {
                    fs::remove_dir_all(p)?;
                } else {
                    fs::remove_file(p)?;
                }
            }
        } else {
            fs::create_dir_all(root)?;
        }
        for (path, blob) in &self.0 {
            let full = root.join(path);
            if let Some(parent) = full.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(full, &blob.0)?;
        }
        Ok(())
    }
}

fn read_into(root: &Path, dir: &Path, tree: &mut FileTree) -> io::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        if entry.file_name() == ".git" {
            continue;
        }
        let p = entry.path();
        let ft = entry.file_type()?;
        if ft.is_dir() {
            read_into(root, &p, tree)?;
        } else if ft.is_file() {
            let rel = p
                .strip_prefix(root)
                .expect("walked path is under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            tree.insert(rel, Blob(fs::read(&p)?));
        }
    }
    Ok(())
}

impl Patch {
    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Splits into `(matching, rest)` by a path predicate.
    pub fn partition(&self, pred: impl Fn(&str) -> bool) -> (Patch, Patch) {
        let mut yes = BTreeMap::new();
        let mut no = BTreeMap::new();
        for (p, c) in &self.0 {
            if pred(p) {
                yes.insert(p.clone(), c.clone());
            } else {
                no.insert(p.clone(), c.clone());
            }
        }
        (Patch(yes), Patch(no))
    }
}
