//! Deterministic synthetic matrices: band, clustered-row, and uniform random.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Independent draws (structure, values, shuffling) use
//! separate ChaCha streams of the same seed, so changing how one of them is
//! consumed never perturbs the others. ChaCha8 output is fully specified, which
//! makes every generated matrix identical across platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const STREAM_STRUCTURE: u64 = 1;
const STREAM_VALUES: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Seeded generator on a given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDist {
    Ones,
    /// Uniform on (−1, 1), never exactly zero.
    #[default]
    Uniform,
}

fn draw<T: Scalar>(dist: ValueDist, rng: &mut ChaCha8Rng) -> T {
    match dist {
        ValueDist::Ones => T::one(),
        ValueDist::Uniform => loop {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let v = T::from_f64_lossy(x);
            if v != T::zero() {
                break v;
            }
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub n: usize,
    /// Half-bandwidth: entry `(i, j)` is present iff `|i − j| ≤ b`.
    pub b: usize,
    pub seed: u64,
    pub value_dist: ValueDist,
}

/// `Σ_i (min(i+b, n−1) − max(i−b, 0) + 1)` in closed form.
pub fn band_nnz(n: usize, b: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let b = b.min(n - 1);
    n * (2 * b + 1) - b * (b + 1)
}

pub fn gen_band<T: Scalar>(spec: &BandSpec) -> Result<CsrMatrix<T>> {
    let n = spec.n;
    if n > 0 && spec.b > n - 1 {
        return Err(Error::InvalidArgument(format!(
            "half-bandwidth {} out of range for n = {n}",
            spec.b
        )));
    }
    let mut rng = stream_rng(spec.seed, STREAM_VALUES);
    let rows = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(spec.b);
            let hi = (i + spec.b).min(n - 1);
            (lo..=hi).map(|j| (j, draw::<T>(spec.value_dist, &mut rng))).collect()
        })
        .collect();
    Ok(CsrMatrix::from_sorted_rows(n, n, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shuffle {
    /// Uniformly random row order.
    #[default]
    Random,
    /// Round-robin over clusters: row `r` belongs to cluster `r mod k`.
    Interleave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeLayout {
    /// Prototype `i` draws only from column slice `i` of `k` equal slices.
    #[default]
    Disjoint,
    /// Every prototype draws from all columns.
    Overlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub k: usize,
    pub rows_per_cluster: usize,
    pub n_cols: usize,
    /// Probability that a column of the prototype's range is in the prototype.
    pub density: f64,
    /// Probability that a row is jittered: one of its prototype entries moves to
    /// a uniformly random column.
    pub jitter: f64,
    pub layout: PrototypeLayout,
    pub shuffle: Shuffle,
    pub seed: u64,
    pub value_dist: ValueDist,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            k: 2,
            rows_per_cluster: 64,
            n_cols: 256,
            density: 1.0,
            jitter: 0.0,
            layout: PrototypeLayout::Disjoint,
            shuffle: Shuffle::Random,
            seed: 0,
            value_dist: ValueDist::Uniform,
        }
    }
}

/// Rows are jittered copies of `k` prototypes. Returns the matrix and the
/// prototype label of each row.
pub fn gen_clustered<T: Scalar>(spec: &ClusterSpec) -> Result<(CsrMatrix<T>, Vec<usize>)> {
    if spec.k == 0 {
        return Err(Error::InvalidArgument("need at least one prototype".into()));
    }
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prototype density must be in (0, 1], got {}",
            spec.density
        )));
    }
    if !(0.0..=1.0).contains(&spec.jitter) {
        return Err(Error::InvalidArgument(format!(
            "jitter must be in [0, 1], got {}",
            spec.jitter
        )));
    }
    if spec.layout == PrototypeLayout::Disjoint && spec.n_cols < spec.k {
        return Err(Error::InvalidArgument(
            "disjoint prototypes need at least k columns".into(),
        ));
    }

    let mut structure = stream_rng(spec.seed, STREAM_STRUCTURE);
    let mut values = stream_rng(spec.seed, STREAM_VALUES);
    let mut shuffler = stream_rng(spec.seed, STREAM_SHUFFLE);

    let prototypes: Vec<Vec<usize>> = (0..spec.k)
        .map(|i| {
            let range = match spec.layout {
                PrototypeLayout::Disjoint => i * spec.n_cols / spec.k..(i + 1) * spec.n_cols / spec.k,
                PrototypeLayout::Overlapping => 0..spec.n_cols,
            };
            let mut cols: Vec<usize> = range
                .clone()
                .filter(|_| spec.density >= 1.0 || structure.gen_bool(spec.density))
                .collect();
            if cols.is_empty() && !range.is_empty() {
                cols.push(structure.gen_range(range));
            }
            cols
        })
        .collect();

    let n_rows = spec.k * spec.rows_per_cluster;
    let labels: Vec<usize> = match spec.shuffle {
        Shuffle::Interleave => (0..n_rows).map(|r| r % spec.k).collect(),
        Shuffle::Random => {
            let mut l: Vec<usize> = (0..n_rows).map(|r| r / spec.rows_per_cluster).collect();
            l.shuffle(&mut shuffler);
            l
        }
    };

    let rows = labels
        .iter()
        .map(|&label| {
            let mut cols = prototypes[label].clone();
            if spec.jitter > 0.0 && !cols.is_empty() && structure.gen_bool(spec.jitter) {
                let i = structure.gen_range(0..cols.len());
                cols[i] = structure.gen_range(0..spec.n_cols);
            }
            cols.sort_unstable();
            cols.dedup();
            cols.into_iter()
                .map(|c| (c, draw::<T>(spec.value_dist, &mut values)))
                .collect()
        })
        .collect();
    Ok((CsrMatrix::from_sorted_rows(n_rows, spec.n_cols, rows), labels))
}

/// Each position is present independently with probability `density`.
/// Gaps between present columns are drawn geometrically, which samples the same
/// distribution as one Bernoulli trial per position.
pub fn gen_uniform_random<T: Scalar>(
    n_rows: usize,
    n_cols: usize,
    density: f64,
    seed: u64,
) -> Result<CsrMatrix<T>> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidArgument(format!(
            "density must be in [0, 1], got {density}"
        )));
    }
    let mut structure = stream_rng(seed, STREAM_STRUCTURE);
    let mut values = stream_rng(seed, STREAM_VALUES);
    let log_q = (1.0 - density).ln();
    let rows = (0..n_rows)
        .map(|_| {
            let mut row = Vec::new();
            if density == 0.0 {
                return row;
            }
            if density == 1.0 {
                return (0..n_cols)
                    .map(|c| (c, draw::<T>(ValueDist::Uniform, &mut values)))
                    .collect();
            }
            let mut c = 0usize;
            loop {
                // number of failures before the next success
                let u: f64 = 1.0 - structure.gen::<f64>();
                let skip = (u.ln() / log_q).floor();
                if !skip.is_finite() || skip >= (n_cols - c) as f64 {
                    break;
                }
                c += skip as usize;
                row.push((c, draw::<T>(ValueDist::Uniform, &mut values)));
                c += 1;
                if c >= n_cols {
                    break;
                }
            }
            row
        })
        .collect();
    Ok(CsrMatrix::from_sorted_rows(n_rows, n_cols, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_examples() {
        let diag: CsrMatrix<f32> = gen_band(&BandSpec {
            n: 4,
            b: 0,
            seed: 1,
            value_dist: ValueDist::Ones,
        })
        .unwrap();
        assert_eq!(diag, CsrMatrix::identity(4));

        let full: CsrMatrix<f32> = gen_band(&BandSpec {
            n: 4,
            b: 3,
            seed: 1,
            value_dist: ValueDist::Uniform,
        })
        .unwrap();
        assert_eq!(full.nnz(), 16);
        assert!(gen_band::<f32>(&BandSpec {
            n: 4,
            b: 4,
            seed: 1,
            value_dist: ValueDist::Ones
        })
        .is_err());
    }

    #[test]
    fn band_nnz_formula() {
        for n in 1usize..20 {
            for b in 0..n {
                let brute: usize = (0..n)
                    .map(|i| (0..n).filter(|&j| i.abs_diff(j) <= b).count())
                    .sum();
                assert_eq!(band_nnz(n, b), brute, "n={n} b={b}");
            }
        }
        assert_eq!(band_nnz(16384, 64), 2_109_376);
        let sparsity = 1.0 - band_nnz(16384, 64) as f64 / (16384.0 * 16384.0);
        assert!((sparsity - 0.99214).abs() < 1e-4);
    }

    #[test]
    fn clustered_single_prototype() {
        let spec = ClusterSpec {
            k: 1,
            rows_per_cluster: 10,
            n_cols: 40,
            density: 0.3,
            ..ClusterSpec::default()
        };
        let (a, labels) = gen_clustered::<f64>(&spec).unwrap();
        assert!(labels.iter().all(|&l| l == 0));
        for r in 1..a.n_rows() {
            assert_eq!(a.row_cols(r), a.row_cols(0));
        }
    }

    #[test]
    fn clustered_interleave_labels() {
        let spec = ClusterSpec {
            k: 3,
            rows_per_cluster: 4,
            shuffle: Shuffle::Interleave,
            ..ClusterSpec::default()
        };
        let (a, labels) = gen_clustered::<f32>(&spec).unwrap();
        assert_eq!(labels, (0..12).map(|r| r % 3).collect::<Vec<_>>());
        // dense disjoint prototypes: row r covers exactly slice r mod 3
        let slice = |l: usize| l * 256 / 3..(l + 1) * 256 / 3;
        for r in 0..12 {
            assert_eq!(a.row_cols(r).to_vec(), slice(r % 3).collect::<Vec<_>>());
        }
    }

    #[test]
    fn clustered_rejects_bad_specs() {
        for spec in [
            ClusterSpec { k: 0, ..ClusterSpec::default() },
            ClusterSpec { density: 0.0, ..ClusterSpec::default() },
            ClusterSpec { jitter: 1.5, ..ClusterSpec::default() },
            ClusterSpec { n_cols: 1, ..ClusterSpec::default() },
        ] {
            assert!(gen_clustered::<f32>(&spec).is_err());
        }
    }

    #[test]
    fn random_extremes() {
        assert_eq!(gen_uniform_random::<f32>(7, 9, 0.0, 3).unwrap().nnz(), 0);
        assert_eq!(gen_uniform_random::<f32>(7, 9, 1.0, 3).unwrap().nnz(), 63);
        assert!(gen_uniform_random::<f32>(7, 9, 1.5, 3).is_err());
    }

    #[test]
    fn random_concentration() {
        for seed in 0..5 {
            let a = gen_uniform_random::<f32>(1000, 1000, 0.01, seed).unwrap();
            let nnz = a.nnz() as f64;
            assert!((nnz - 10_000.0).abs() <= 500.0, "seed {seed}: nnz {nnz}");
        }
    }

    #[test]
    fn generators_are_reproducible() {
        let spec = BandSpec {
            n: 50,
            b: 5,
            seed: 9,
            value_dist: ValueDist::Uniform,
        };
        assert_eq!(gen_band::<f32>(&spec).unwrap(), gen_band::<f32>(&spec).unwrap());
        let c = ClusterSpec {
            jitter: 0.1,
            density: 0.5,
            seed: 4,
            ..ClusterSpec::default()
        };
        assert_eq!(gen_clustered::<f64>(&c).unwrap(), gen_clustered::<f64>(&c).unwrap());
        assert_eq!(
            gen_uniform_random::<f64>(30, 40, 0.2, 11).unwrap(),
            gen_uniform_random::<f64>(30, 40, 0.2, 11).unwrap()
        );
        assert_ne!(
            gen_uniform_random::<f64>(30, 40, 0.2, 11).unwrap(),
            gen_uniform_random::<f64>(30, 40, 0.2, 12).unwrap()
        );
    }
}
