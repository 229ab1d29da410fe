use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::history::CommitRange;

/// Number of commits touching both files of each unordered pair.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoChangeMatrix {
    /// Keys are `(a, b)` with `a < b`.
    #[serde(with = "pair_map")]
    pub counts: BTreeMap<(String, String), u64>,
}

impl CoChangeMatrix {
    pub fn get(&self, a: &str, b: &str) -> u64 {
        let key = if a < b { (a, b) } else { (b, a) };
        self.counts
            .get(&(key.0.to_string(), key.1.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

pub fn compute_cochange(range: &CommitRange) -> CoChangeMatrix {
    let mut counts = BTreeMap::new();
    for c in &range.commits {
        let files: Vec<&str> = c.touched_paths().into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        for i in 0..files.len() {
            for j in i + 1..files.len() {
                *counts
                    .entry((files[i].to_string(), files[j].to_string()))
                    .or_insert(0) += 1;
            }
        }
    }
    CoChangeMatrix { counts }
}

/// Serializes pair keys as `[{"a":..,"b":..,"count":..}]` since JSON keys
/// must be strings.
mod pair_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        a: String,
        b: String,
        count: u64,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<(String, String), u64>, s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|((a, b), c)| Entry { a: a.clone(), b: b.clone(), count: *c })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(String, String), u64>, D::Error> {
        Ok(Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| ((e.a, e.b), e.count))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{ChangeKind, Commit, FileChange};
    use crate::ids::test_id;
    use proptest::prelude::*;

    fn commit(n: u32, paths: &[&str]) -> Commit {
        Commit {
            id: test_id(n),
            parent_ids: vec![],
            author: String::new(),
            timestamp: 0,
            message: String::new(),
            file_changes: paths
                .iter()
                .map(|p| FileChange {
                    path: p.to_string(),
                    old_path: None,
                    kind: ChangeKind::Modify,
                    added_lines: 0,
                    removed_lines: 0,
                })
                .collect(),
            linked_refs: vec![],
        }
    }

    fn range(commits: Vec<Commit>) -> CommitRange {
        CommitRange {
            start_tag: String::new(),
            end_tag: String::new(),
            base: test_id(0),
            head: test_id(0),
            commits,
            removed: vec![],
        }
    }

    #[test]
    fn counts_pairs() {
        let m = compute_cochange(&range(vec![commit(1, &["x", "y"]), commit(2, &["y", "x"]), commit(3, &["z"])]));
        assert_eq!(m.get("x", "y"), 2);
        assert_eq!(m.get("y", "x"), 2);
        assert_eq!(m.counts.len(), 1);
    }

    const FILES: &[&str] = &["a", "b", "c", "d", "e"];

    proptest! {
        #[test]
        fn equals_brute_force_and_order_free(sets in prop::collection::vec(prop::collection::btree_set(0..5usize, 0..5), 0..8), seed in any::<u64>()) {
            let commits: Vec<Commit> = sets.iter().enumerate()
                .map(|(i, s)| commit(i as u32 + 1, &s.iter().map(|&f| FILES[f]).collect::<Vec<_>>()))
                .collect();
            let m = compute_cochange(&range(commits.clone()));
            for (a, fa) in FILES.iter().enumerate() {
                for (b, fb) in FILES.iter().enumerate().skip(a + 1) {
                    let brute = sets.iter().filter(|s| s.contains(&a) && s.contains(&b)).count() as u64;
                    prop_assert_eq!(m.get(fa, fb), brute);
                }
            }
            let mut shuffled = commits;
            let k = shuffled.len().max(1);
            shuffled.rotate_left((seed as usize) % k);
            prop_assert_eq!(compute_cochange(&range(shuffled)), m);
        }
    }
}
