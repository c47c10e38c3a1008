//! Row reordering that groups rows with similar block-column patterns so that
//! fewer BCSR blocks are needed.
//!
//! Similarity is the Jaccard distance between sets of block-column indices
//! (columns quantized by the block width). Clustering is greedy: seed a new
//! cluster with the lowest-index unclustered row, then scan the remaining
//! unclustered rows in ascending index order and merge every row whose distance
//! to the cluster's running pattern union is below `tau`. Rows are emitted
//! cluster by cluster; empty rows form one trailing cluster.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::blocking::{block_stats, to_bcsr, BlockDims, BlockStats};
use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default merge threshold on the Jaccard distance.
pub const DEFAULT_TAU: f64 = 0.9;

/// Bijection on `0..n`. Position `i` of the permuted object holds element
/// `map[i]` of the original.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &x in &map {
            if x >= map.len() || std::mem::replace(&mut seen[x], true) {
                return Err(Error::InvalidArgument(format!(
                    "not a permutation of 0..{}: bad or repeated index {x}",
                    map.len()
                )));
            }
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &x)| i == x)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &x) in self.map.iter().enumerate() {
            inv[x] = i;
        }
        Self { map: inv }
    }

    /// Newline-delimited decimal indices.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.map.len() * 6);
        for x in &self.map {
            s.push_str(&x.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let map = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(i + 1, format!("invalid index '{}'", l.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(map)
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(map: Vec<usize>) -> Result<Self> {
        Self::new(map)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.map
    }
}

/// Sorted, duplicate-free set of block-column indices touched by a row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RowPattern(Vec<usize>);

impl RowPattern {
    pub fn from_indices(mut idx: Vec<usize>) -> Self {
        idx.sort_unstable();
        idx.dedup();
        Self(idx)
    }

    /// Pattern of `row` with columns quantized by `block_width`.
    pub fn of_row<T: Scalar>(a: &CsrMatrix<T>, row: usize, block_width: usize) -> Self {
        let mut out: Vec<usize> = Vec::new();
        // columns are sorted, so quantized columns are non-decreasing
        for &c in a.row_cols(row) {
            let bc = c / block_width;
            if out.last() != Some(&bc) {
                out.push(bc);
            }
        }
        Self(out)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `1 − |a∩b| / |a∪b|`; two empty patterns are at distance 0.
pub fn jaccard_distance(a: &RowPattern, b: &RowPattern) -> f64 {
    let (x, y) = (a.indices(), b.indices());
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = x.len() + y.len() - inter;
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(())
}

/// Greedy Jaccard clustering of the rows of `a`; see the module docs.
pub fn cluster_rows<T: Scalar>(a: &CsrMatrix<T>, dims: BlockDims, tau: f64) -> Result<Permutation> {
    let map: Vec<usize> = row_clusters(a, dims, tau)?.into_iter().flatten().collect();
    debug_assert_eq!(map.len(), a.n_rows());
    Ok(Permutation { map })
}

/// The clusters behind [`cluster_rows`], in creation order, each listing its
/// rows in ascending index order. Empty rows, if any, form the last cluster.
///
/// A row sharing no block column with the cluster union is at distance 1 and
/// can never merge (`tau ≤ 1`), so only rows reachable through an inverted
/// block-column index are examined. They are visited in ascending index order,
/// which reproduces the plain first-fit scan exactly.
pub fn row_clusters<T: Scalar>(a: &CsrMatrix<T>, dims: BlockDims, tau: f64) -> Result<Vec<Vec<usize>>> {
    check_tau(tau)?;
    let n = a.n_rows();
    let n_bc = a.n_cols().div_ceil(dims.w);
    let patterns: Vec<RowPattern> = (0..n).map(|r| RowPattern::of_row(a, r, dims.w)).collect();

    let mut inverted: Vec<Vec<usize>> = vec![Vec::new(); n_bc];
    for (r, p) in patterns.iter().enumerate() {
        for &bc in p.indices() {
            inverted[bc].push(r);
        }
    }

    let mut clustered = vec![false; n];
    // per-cluster stamps: union membership by block column, queued rows
    let mut in_union = vec![0usize; n_bc];
    let mut queued = vec![0usize; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut heap: BinaryHeap<Reverse<usize>> = BinaryHeap::new();
    let mut cluster_id = 0usize;

    for seed in 0..n {
        if clustered[seed] || patterns[seed].is_empty() {
            continue;
        }
        cluster_id += 1;
        clustered[seed] = true;
        let mut members = vec![seed];

        let mut scan = Scan {
            patterns: &patterns,
            inverted: &inverted,
            in_union: &mut in_union,
            queued: &mut queued,
            cluster_id,
            union_len: 0,
        };
        scan.absorb(seed, &mut heap, &clustered);

        while let Some(Reverse(cand)) = heap.pop() {
            let p = patterns[cand].indices();
            let inter = p.iter().filter(|&&bc| scan.in_union[bc] == cluster_id).count();
            let union = p.len() + scan.union_len - inter;
            let dist = 1.0 - inter as f64 / union as f64;
            if dist < tau {
                clustered[cand] = true;
                members.push(cand);
                scan.absorb(cand, &mut heap, &clustered);
            }
        }
        clusters.push(members);
    }

    let empty: Vec<usize> = (0..n).filter(|&r| patterns[r].is_empty()).collect();
    if !empty.is_empty() {
        clusters.push(empty);
    }
    Ok(clusters)
}

struct Scan<'a> {
    patterns: &'a [RowPattern],
    inverted: &'a [Vec<usize>],
    in_union: &'a mut [usize],
    queued: &'a mut [usize],
    cluster_id: usize,
    union_len: usize,
}

impl Scan<'_> {
    /// Adds `row`'s pattern to the cluster union and queues unclustered rows
    /// after `row` that share a newly added block column.
    fn absorb(&mut self, row: usize, heap: &mut BinaryHeap<Reverse<usize>>, clustered: &[bool]) {
        for &bc in self.patterns[row].indices() {
            if self.in_union[bc] == self.cluster_id {
                continue;
            }
            self.in_union[bc] = self.cluster_id;
            self.union_len += 1;
            for &u in &self.inverted[bc] {
                if u > row && !clustered[u] && self.queued[u] != self.cluster_id {
                    self.queued[u] = self.cluster_id;
                    heap.push(Reverse(u));
                }
            }
        }
    }
}

/// Row `i` of the result is row `p[i]` of `a`.
pub fn apply_row_permutation<T: Scalar>(a: &CsrMatrix<T>, p: &Permutation) -> Result<CsrMatrix<T>> {
    if p.len() != a.n_rows() {
        return Err(Error::LengthMismatch {
            expected: a.n_rows(),
            found: p.len(),
        });
    }
    let rows = p
        .as_slice()
        .iter()
        .map(|&src| {
            a.row_cols(src)
                .iter()
                .copied()
                .zip(a.row_values(src).iter().copied())
                .collect()
        })
        .collect();
    Ok(CsrMatrix::from_sorted_rows(a.n_rows(), a.n_cols(), rows))
}

/// Column `j` of the result is column `p[j]` of `a`.
pub fn apply_column_permutation<T: Scalar>(a: &CsrMatrix<T>, p: &Permutation) -> Result<CsrMatrix<T>> {
    if p.len() != a.n_cols() {
        return Err(Error::LengthMismatch {
            expected: a.n_cols(),
            found: p.len(),
        });
    }
    let inv = p.inverse();
    let rows = (0..a.n_rows())
        .map(|r| {
            let mut row: Vec<(usize, T)> = a
                .row_cols(r)
                .iter()
                .zip(a.row_values(r))
                .map(|(&c, &v)| (inv.map[c], v))
                .collect();
            row.sort_unstable_by_key(|&(c, _)| c);
            row
        })
        .collect();
    Ok(CsrMatrix::from_sorted_rows(a.n_rows(), a.n_cols(), rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ReorderMode {
    /// Leave the matrix as is.
    #[serde(rename = "none")]
    None,
    #[default]
    #[serde(rename = "rows")]
    Rows,
    /// Rows first, then columns clustered by block-row pattern.
    #[serde(rename = "rows-cols")]
    RowsCols,
}

impl fmt::Display for ReorderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReorderMode::None => "none",
            ReorderMode::Rows => "rows",
            ReorderMode::RowsCols => "rows-cols",
        })
    }
}

impl FromStr for ReorderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ReorderMode::None),
            "rows" => Ok(ReorderMode::Rows),
            "rows-cols" | "rows+cols" => Ok(ReorderMode::RowsCols),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode '{s}' (expected none, rows, rows-cols)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReorderConfig {
    pub tau: f64,
    pub mode: ReorderMode,
    /// Apply the permutation only when it strictly lowers the block count.
    pub keep_best: bool,
}

impl Default for ReorderConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            mode: ReorderMode::Rows,
            keep_best: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReorderReport {
    pub tau: f64,
    pub mode: ReorderMode,
    pub keep_best: bool,
    /// False when the permutation was discarded (or never computed).
    pub applied: bool,
    pub before: BlockStats,
    pub after: BlockStats,
    /// `before.n_e / after.n_e`; 1 for an empty matrix.
    pub ratio: f64,
}

/// A reordered matrix together with the permutations that produced it:
/// `matrix = P·A·Qᵀ`, i.e. row `i` is source row `row_perm[i]` and column `j`
/// is source column `col_perm[j]`.
#[derive(Debug, Clone)]
pub struct Reordered<T> {
    pub matrix: CsrMatrix<T>,
    pub row_perm: Permutation,
    pub col_perm: Option<Permutation>,
    pub report: ReorderReport,
}

pub fn reorder<T: Scalar>(a: &CsrMatrix<T>, dims: BlockDims, cfg: &ReorderConfig) -> Result<Reordered<T>> {
    check_tau(cfg.tau)?;
    let nnz = a.nnz();
    let before = block_stats(&to_bcsr(a, dims), nnz);

    let (matrix, row_perm, col_perm) = match cfg.mode {
        ReorderMode::None => (a.clone(), Permutation::identity(a.n_rows()), None),
        ReorderMode::Rows => {
            let p = cluster_rows(a, dims, cfg.tau)?;
            (apply_row_permutation(a, &p)?, p, None)
        }
        ReorderMode::RowsCols => {
            let p = cluster_rows(a, dims, cfg.tau)?;
            let rows_done = apply_row_permutation(a, &p)?;
            let q = cluster_rows(&rows_done.transpose(), dims.transposed(), cfg.tau)?;
            (apply_column_permutation(&rows_done, &q)?, p, Some(q))
        }
    };
    let after = block_stats(&to_bcsr(&matrix, dims), nnz);

    let discard = cfg.mode == ReorderMode::None || (cfg.keep_best && after.n_e >= before.n_e);
    let (matrix, row_perm, col_perm, after, applied) = if discard {
        (a.clone(), Permutation::identity(a.n_rows()), None, before.clone(), false)
    } else {
        (matrix, row_perm, col_perm, after, true)
    };

    let ratio = if after.n_e == 0 {
        1.0
    } else {
        before.n_e as f64 / after.n_e as f64
    };
    Ok(Reordered {
        matrix,
        row_perm,
        col_perm,
        report: ReorderReport {
            tau: cfg.tau,
            mode: cfg.mode,
            keep_best: cfg.keep_best,
            applied,
            before,
            after,
            ratio,
        },
    })
}

/// Block statistics before and after reordering under identical blocking.
pub fn evaluate_reordering<T: Scalar>(
    a: &CsrMatrix<T>,
    dims: BlockDims,
    cfg: &ReorderConfig,
) -> Result<ReorderReport> {
    Ok(reorder(a, dims, cfg)?.report)
}
