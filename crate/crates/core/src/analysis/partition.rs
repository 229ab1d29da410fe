use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PartitionError {
    #[error("partitions cover different items ({only_a} only in the first, {only_b} only in the second)")]
    MismatchedUniverse { only_a: usize, only_b: usize },
    #[error("item {0} appears in more than one group")]
    Overlapping(String),
}

/// Named groups of item ids.
pub type Partition = Vec<(String, Vec<String>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionComparison {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// `contingency[i][j]` counts items in row group `i` and column group `j`.
    pub contingency: Vec<Vec<u64>>,
    pub ari: f64,
    pub nmi: f64,
    /// Largest share of each row group that lands in one column group.
    pub per_milestone_overlap: BTreeMap<String, f64>,
}

fn labels(p: &Partition) -> Result<BTreeMap<&str, usize>, PartitionError> {
    let mut out = BTreeMap::new();
    for (g, (_, items)) in p.iter().enumerate() {
        for it in items {
            if out.insert(it.as_str(), g).is_some() {
                return Err(PartitionError::Overlapping(it.clone()));
            }
        }
    }
    Ok(out)
}

fn choose2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Agreement between two partitions of the same items.
///
/// ARI is the chance-corrected Rand index of the contingency table (1 when
/// the correction is undefined, as for identical trivial partitions). NMI
/// divides mutual information by the arithmetic mean of the two entropies
/// (1 when both entropies are zero). Empty groups are dropped.
pub fn compare_partitions(a: &Partition, b: &Partition) -> Result<PartitionComparison, PartitionError> {
    let (la, lb) = (labels(a)?, labels(b)?);
    let ka: BTreeSet<&str> = la.keys().copied().collect();
    let kb: BTreeSet<&str> = lb.keys().copied().collect();
    if ka != kb {
        return Err(PartitionError::MismatchedUniverse {
            only_a: ka.difference(&kb).count(),
            only_b: kb.difference(&ka).count(),
        });
    }
    let rows_idx: Vec<usize> = (0..a.len()).filter(|&g| !a[g].1.is_empty()).collect();
    let cols_idx: Vec<usize> = (0..b.len()).filter(|&g| !b[g].1.is_empty()).collect();
    let rpos: BTreeMap<usize, usize> = rows_idx.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let cpos: BTreeMap<usize, usize> = cols_idx.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut table = vec![vec![0u64; cols_idx.len()]; rows_idx.len()];
    for (item, ga) in &la {
        table[rpos[ga]][cpos[&lb[item]]] += 1;
    }
    let n: u64 = la.len() as u64;
    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..cols_idx.len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();

    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = row_sums.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = col_sums.iter().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let ari = if total == 0.0 {
        1.0
    } else {
        let expected = sa * sb / total;
        let max = (sa + sb) / 2.0;
        if max == expected { 1.0 } else { (index - expected) / (max - expected) }
    };

    let nf = n as f64;
    let (ha, hb) = (entropy(&row_sums, nf), entropy(&col_sums, nf));
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    let nmi = if n == 0 || ha + hb == 0.0 { 1.0 } else { (mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0) };

    let per_milestone_overlap = rows_idx
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let best = table[i].iter().copied().max().unwrap_or(0);
            (a[g].0.clone(), best as f64 / row_sums[i] as f64)
        })
        .collect();
    Ok(PartitionComparison {
        rows: rows_idx.iter().map(|&g| a[g].0.clone()).collect(),
        cols: cols_idx.iter().map(|&g| b[g].0.clone()).collect(),
        contingency: table,
        ari,
        nmi,
        per_milestone_overlap,
    })
}
