//! Blocked SpMM executor.
//!
//! The output `C` is cut into tiles of one block row by one `n`-wide column
//! panel. Each tile starts from zero and walks the stored blocks of its block
//! row in ascending block-column order, issuing one fixed-shape
//! multiply-accumulate `tile_mma` per block. Tiles are distributed statically
//! over worker threads in contiguous row-major ranges; every tile is written by
//! exactly one worker and its accumulation order never depends on the worker
//! count, so results are bitwise reproducible.
//!
//! With `skip_empty` off the executor visits every block of the grid and feeds
//! an explicit zero block where nothing is stored. That is the baseline the
//! block-row pointer array lets the default path avoid.

use std::num::NonZeroUsize;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocking::{to_bcsr, BcsrMatrix, BlockDims};
use crate::csr::{CsrMatrix, DenseMatrix};
use crate::error::{Error, Result};
use crate::reorder::{reorder, Permutation, ReorderConfig, ReorderReport};
use crate::scalar::Scalar;

/// Default output panel width.
pub const DEFAULT_TILE_N: usize = 8;

/// Shape of one microkernel call: an `m×k` block times a `k×n` panel slice
/// accumulated into an `m×n` tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileShape {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

impl TileShape {
    pub fn for_dims(dims: BlockDims, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("tile width n must be positive".into()));
        }
        Ok(Self {
            m: dims.h,
            n,
            k: dims.w,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Workers {
    /// One worker per available hardware thread.
    #[default]
    Auto,
    Fixed(NonZeroUsize),
}

impl Workers {
    pub fn fixed(n: usize) -> Result<Self> {
        NonZeroUsize::new(n)
            .map(Workers::Fixed)
            .ok_or_else(|| Error::InvalidArgument("worker count must be at least 1".into()))
    }

    pub fn resolve(self) -> usize {
        match self {
            Workers::Auto => thread::available_parallelism().map_or(1, NonZeroUsize::get),
            Workers::Fixed(n) => n.get(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpmmOptions {
    pub tile: TileShape,
    pub workers: Workers,
    /// Iterate stored blocks only (true) or the whole block grid (false).
    pub skip_empty: bool,
    /// Restore the caller's row order after a reordered multiply.
    pub unpermute_output: bool,
}

impl SpmmOptions {
    pub fn for_dims(dims: BlockDims) -> Self {
        Self {
            tile: TileShape {
                m: dims.h,
                n: DEFAULT_TILE_N,
                k: dims.w,
            },
            workers: Workers::Auto,
            skip_empty: true,
            unpermute_output: true,
        }
    }
}

impl Default for SpmmOptions {
    fn default() -> Self {
        Self::for_dims(BlockDims::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpmmCounters {
    pub tile_mma_calls: u64,
    /// Stored blocks read, counted once per column panel.
    pub blocks_touched: u64,
    pub wall_time_s: f64,
}

/// `c += a·b` on row-major tiles: `a` is `m×k`, `b` is `k×n`, `c` is `m×n`.
/// Each `c[i][j]` accumulates its `k` products in ascending order.
///
/// Panics if a slice length does not match `shape`.
#[inline]
pub fn tile_mma<T: Scalar>(shape: TileShape, a: &[T], b: &[T], c: &mut [T]) {
    assert_eq!(a.len(), shape.m * shape.k, "a tile must be m×k");
    assert_eq!(b.len(), shape.k * shape.n, "b tile must be k×n");
    assert_eq!(c.len(), shape.m * shape.n, "c tile must be m×n");
    match (shape.m, shape.k, shape.n) {
        (16, 8, 8) => mma_fixed::<T, 16, 8, 8>(a, b, c),
        (16, 16, 8) => mma_fixed::<T, 16, 16, 8>(a, b, c),
        (8, 8, 8) => mma_fixed::<T, 8, 8, 8>(a, b, c),
        _ => mma_dyn(shape, a, b, c),
    }
}

#[inline(always)]
fn mma_fixed<T: Scalar, const M: usize, const K: usize, const N: usize>(a: &[T], b: &[T], c: &mut [T]) {
    for i in 0..M {
        let c_row: &mut [T; N] = (&mut c[i * N..(i + 1) * N]).try_into().unwrap();
        for l in 0..K {
            let x = a[i * K + l];
            let b_row: &[T; N] = b[l * N..(l + 1) * N].try_into().unwrap();
            for j in 0..N {
                c_row[j] += x * b_row[j];
            }
        }
    }
}

fn mma_dyn<T: Scalar>(shape: TileShape, a: &[T], b: &[T], c: &mut [T]) {
    let TileShape { m, n, k } = shape;
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let x = a[i * k + l];
            let b_row = &b[l * n..(l + 1) * n];
            for j in 0..n {
                c_row[j] += x * b_row[j];
            }
        }
    }
}

/// `C = A·B` for a blocked `A`.
pub fn bcsr_spmm<T: Scalar>(ab: &BcsrMatrix<T>, b: &DenseMatrix<T>, opts: &SpmmOptions) -> Result<DenseMatrix<T>> {
    bcsr_spmm_instrumented(ab, b, opts).map(|(c, _)| c)
}

pub fn bcsr_spmm_instrumented<T: Scalar>(
    ab: &BcsrMatrix<T>,
    b: &DenseMatrix<T>,
    opts: &SpmmOptions,
) -> Result<(DenseMatrix<T>, SpmmCounters)> {
    if ab.n_cols() != b.n_rows() {
        return Err(Error::DimensionMismatch {
            op: "bcsr_spmm",
            left_rows: ab.n_rows(),
            left_cols: ab.n_cols(),
            right_rows: b.n_rows(),
            right_cols: b.n_cols(),
        });
    }
    let dims = ab.dims();
    let shape = opts.tile;
    if shape.m != dims.h || shape.k != dims.w || shape.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "tile shape m={} k={} n={} does not fit {} blocks",
            shape.m, shape.k, shape.n, dims
        )));
    }

    let start = Instant::now();
    let n_out = b.n_cols();
    let n_panels = n_out.div_ceil(shape.n);
    let n_tiles = ab.n_block_rows() * n_panels;
    let tile_len = shape.m * shape.n;
    let panels = pack_panels(b, ab.n_block_cols() * dims.w, shape.n, n_panels);

    let mut tiles = vec![T::zero(); n_tiles * tile_len];
    let workers = opts.workers.resolve().clamp(1, n_tiles.max(1));
    let per_worker = n_tiles.div_ceil(workers).max(1);

    let job = Job {
        ab,
        panels: &panels,
        panel_len: ab.n_block_cols() * dims.w * shape.n,
        n_panels,
        shape,
        skip_empty: opts.skip_empty,
        zero_block: vec![T::zero(); dims.area()],
    };

    let mut counters = SpmmCounters::default();
    if workers == 1 {
        let (calls, touched) = job.run(0, &mut tiles);
        counters.tile_mma_calls = calls;
        counters.blocks_touched = touched;
    } else {
        let job = &job;
        let results: Vec<(u64, u64)> = thread::scope(|s| {
            let handles: Vec<_> = tiles
                .chunks_mut(per_worker * tile_len)
                .enumerate()
                .map(|(w, chunk)| s.spawn(move || job.run(w * per_worker, chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("spmm worker panicked"))
                .collect()
        });
        for (calls, touched) in results {
            counters.tile_mma_calls += calls;
            counters.blocks_touched += touched;
        }
    }

    // crop tiles into C
    let mut c = DenseMatrix::zeros(ab.n_rows(), n_out);
    for t in 0..n_tiles {
        let (br, p) = (t / n_panels, t % n_panels);
        let tile = &tiles[t * tile_len..(t + 1) * tile_len];
        let col0 = p * shape.n;
        let width = shape.n.min(n_out - col0);
        for lr in 0..shape.m {
            let r = br * shape.m + lr;
            if r >= ab.n_rows() {
                break;
            }
            c.row_mut(r)[col0..col0 + width].copy_from_slice(&tile[lr * shape.n..lr * shape.n + width]);
        }
    }
    counters.wall_time_s = start.elapsed().as_secs_f64();
    Ok((c, counters))
}

/// Copies `B` into `n_panels` zero-padded panels of `padded_rows × n`, so the
/// `k×n` operand for block column `j` is one contiguous slice.
fn pack_panels<T: Scalar>(b: &DenseMatrix<T>, padded_rows: usize, n: usize, n_panels: usize) -> Vec<T> {
    let panel_len = padded_rows * n;
    let mut out = vec![T::zero(); n_panels * panel_len];
    for p in 0..n_panels {
        let col0 = p * n;
        let width = n.min(b.n_cols() - col0);
        let panel = &mut out[p * panel_len..(p + 1) * panel_len];
        for r in 0..b.n_rows() {
            panel[r * n..r * n + width].copy_from_slice(&b.row(r)[col0..col0 + width]);
        }
    }
    out
}

struct Job<'a, T> {
    ab: &'a BcsrMatrix<T>,
    panels: &'a [T],
    panel_len: usize,
    n_panels: usize,
    shape: TileShape,
    skip_empty: bool,
    zero_block: Vec<T>,
}

impl<T: Scalar> Job<'_, T> {
    /// Computes the consecutive tiles starting at `first` into `out`.
    /// Returns (tile_mma calls, stored blocks touched).
    fn run(&self, first: usize, out: &mut [T]) -> (u64, u64) {
        let tile_len = self.shape.m * self.shape.n;
        let kn = self.shape.k * self.shape.n;
        let col_idx = self.ab.block_col_idx();
        let (mut calls, mut touched) = (0u64, 0u64);
        for (i, tile) in out.chunks_exact_mut(tile_len).enumerate() {
            let t = first + i;
            let (br, p) = (t / self.n_panels, t % self.n_panels);
            let panel = &self.panels[p * self.panel_len..(p + 1) * self.panel_len];
            let stored = self.ab.block_row_range(br);
            if self.skip_empty {
                for blk in stored {
                    let bc = col_idx[blk];
                    tile_mma(self.shape, self.ab.block(blk), &panel[bc * kn..(bc + 1) * kn], tile);
                    calls += 1;
                    touched += 1;
                }
            } else {
                let mut cursor = stored.start;
                for bc in 0..self.ab.n_block_cols() {
                    let a = if cursor < stored.end && col_idx[cursor] == bc {
                        cursor += 1;
                        touched += 1;
                        self.ab.block(cursor - 1)
                    } else {
                        &self.zero_block
                    };
                    tile_mma(self.shape, a, &panel[bc * kn..(bc + 1) * kn], tile);
                    calls += 1;
                }
            }
        }
        (calls, touched)
    }
}

/// Row `i` of the result is row `p[i]` of `d`.
pub fn permute_dense_rows<T: Scalar>(d: &DenseMatrix<T>, p: &Permutation) -> Result<DenseMatrix<T>> {
    if p.len() != d.n_rows() {
        return Err(Error::LengthMismatch {
            expected: d.n_rows(),
            found: p.len(),
        });
    }
    let mut data = Vec::with_capacity(d.data().len());
    for &src in p.as_slice() {
        data.extend_from_slice(d.row(src));
    }
    DenseMatrix::new(d.n_rows(), d.n_cols(), data)
}

/// Preprocessed operand: reordering and blocking are done once and reused for
/// every right-hand side.
#[derive(Debug, Clone)]
pub struct PreparedSpmm<T> {
    bcsr: BcsrMatrix<T>,
    row_perm: Permutation,
    col_perm: Option<Permutation>,
    report: ReorderReport,
    n_cols: usize,
}

impl<T: Scalar> PreparedSpmm<T> {
    pub fn new(a: &CsrMatrix<T>, dims: BlockDims, cfg: &ReorderConfig) -> Result<Self> {
        let r = reorder(a, dims, cfg)?;
        Ok(Self {
            bcsr: to_bcsr(&r.matrix, dims),
            row_perm: r.row_perm,
            col_perm: r.col_perm,
            report: r.report,
            n_cols: a.n_cols(),
        })
    }

    pub fn bcsr(&self) -> &BcsrMatrix<T> {
        &self.bcsr
    }

    pub fn row_perm(&self) -> &Permutation {
        &self.row_perm
    }

    pub fn col_perm(&self) -> Option<&Permutation> {
        self.col_perm.as_ref()
    }

    pub fn report(&self) -> &ReorderReport {
        &self.report
    }

    pub fn multiply(&self, b: &DenseMatrix<T>, opts: &SpmmOptions) -> Result<DenseMatrix<T>> {
        self.multiply_instrumented(b, opts).map(|(c, _)| c)
    }

    /// Multiplies by `b`. When `opts.unpermute_output` is false the rows come
    /// back in the reordered sequence, i.e. row `i` is row `row_perm[i]` of `A·B`.
    pub fn multiply_instrumented(
        &self,
        b: &DenseMatrix<T>,
        opts: &SpmmOptions,
    ) -> Result<(DenseMatrix<T>, SpmmCounters)> {
        if b.n_rows() != self.n_cols {
            return Err(Error::DimensionMismatch {
                op: "spmm_pipeline",
                left_rows: self.bcsr.n_rows(),
                left_cols: self.n_cols,
                right_rows: b.n_rows(),
                right_cols: b.n_cols(),
            });
        }
        let permuted_b;
        let b = match &self.col_perm {
            Some(q) => {
                permuted_b = permute_dense_rows(b, q)?;
                &permuted_b
            }
            None => b,
        };
        let (c, counters) = bcsr_spmm_instrumented(&self.bcsr, b, opts)?;
        if !opts.unpermute_output || self.row_perm.is_identity() {
            return Ok((c, counters));
        }
        Ok((permute_dense_rows(&c, &self.row_perm.inverse())?, counters))
    }
}

/// Reorder, block and multiply in one call.
pub fn spmm_pipeline<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    dims: BlockDims,
    cfg: &ReorderConfig,
    opts: &SpmmOptions,
) -> Result<DenseMatrix<T>> {
    if a.n_cols() != b.n_rows() {
        return Err(Error::DimensionMismatch {
            op: "spmm_pipeline",
            left_rows: a.n_rows(),
            left_cols: a.n_cols(),
            right_rows: b.n_rows(),
            right_cols: b.n_cols(),
        });
    }
    PreparedSpmm::new(a, dims, cfg)?.multiply(b, opts)
}
