use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

/// A 40-hex commit identifier, always stored lowercase.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct CommitId(String);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid commit id {0:?}: expected 40 hex digits")]
pub struct InvalidCommitId(pub String);

impl CommitId {
    pub fn parse(s: &str) -> Result<Self, InvalidCommitId> {
        let trimmed = s.trim();
        if trimmed.len() == 40 && trimmed.bytes().all(|b| b.is_ascii_hexdigit()) {
            Ok(CommitId(trimmed.to_ascii_lowercase()))
        } else {
            Err(InvalidCommitId(s.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Seven-character abbreviation used in labels.
    pub fn short(&self) -> &str {
        &self.0[..7]
    }
}

impl<'de> Deserialize<'de> for CommitId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        CommitId::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CommitId({})", self.short())
    }
}

#[cfg(test)]
pub(crate) fn test_id(n: u32) -> CommitId {
    CommitId::parse(&format!("{n:040x}")).unwrap()
}
