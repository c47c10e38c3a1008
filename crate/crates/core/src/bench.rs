//! Benchmark records: timings, structural statistics and derived throughput.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocking::BlockStats;
use crate::csr::DenseMatrix;
use crate::error::{Error, Result};
use crate::perf_model::mean_cv;
use crate::reorder::ReorderMode;
use crate::scalar::Scalar;
use crate::spmm::{PreparedSpmm, SpmmCounters, SpmmOptions};

/// Default number of timed repeats.
pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_s: f64,
    pub cv: f64,
    pub repeats: usize,
    pub counters: SpmmCounters,
}

/// One untimed warm-up multiply, then `repeats` timed ones. The product of the
/// last run is returned alongside the timing.
pub fn time_multiply<T: Scalar>(
    prepared: &PreparedSpmm<T>,
    b: &DenseMatrix<T>,
    opts: &SpmmOptions,
    repeats: usize,
) -> Result<(DenseMatrix<T>, Timing)> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let (mut c, counters) = prepared.multiply_instrumented(b, opts)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        c = prepared.multiply(b, opts)?;
        times.push(start.elapsed().as_secs_f64());
    }
    let (mean_s, cv) = mean_cv(&times);
    Ok((
        c,
        Timing {
            mean_s,
            cv,
            repeats,
            counters,
        },
    ))
}

/// `2·ops·n_rhs / t` in GFLOP/s; zero for a zero time.
pub fn gflops(ops: usize, n_rhs: usize, seconds: f64) -> f64 {
    if seconds > 0.0 {
        2.0 * ops as f64 * n_rhs as f64 / seconds / 1e9
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub matrix: String,
    pub h: usize,
    pub w: usize,
    pub tau: f64,
    pub mode: ReorderMode,
    pub n_rhs: usize,
    pub skip_empty: bool,
    pub workers: usize,
    pub before: BlockStats,
    pub after: BlockStats,
    pub mean_s: f64,
    pub cv: f64,
    pub repeats: usize,
    pub tile_mma_calls: u64,
    pub blocks_touched: u64,
    /// Throughput over structural nonzeros, `2·nnz·N / t`.
    pub gflops: f64,
    /// Throughput over everything the microkernel executed, `2·n_e·h·w·N / t`.
    pub padded_gflops: f64,
}

impl BenchRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        matrix: impl Into<String>,
        tau: f64,
        mode: ReorderMode,
        n_rhs: usize,
        opts: &SpmmOptions,
        before: BlockStats,
        after: BlockStats,
        timing: &Timing,
    ) -> Self {
        let executed_blocks = if n_rhs == 0 {
            0
        } else {
            timing.counters.tile_mma_calls as usize / n_rhs.div_ceil(opts.tile.n)
        };
        Self {
            matrix: matrix.into(),
            h: after.h,
            w: after.w,
            tau,
            mode,
            n_rhs,
            skip_empty: opts.skip_empty,
            workers: opts.workers.resolve(),
            gflops: gflops(after.nnz, n_rhs, timing.mean_s),
            padded_gflops: gflops(executed_blocks * after.h * after.w, n_rhs, timing.mean_s),
            before,
            after,
            mean_s: timing.mean_s,
            cv: timing.cv,
            repeats: timing.repeats,
            tile_mma_calls: timing.counters.tile_mma_calls,
            blocks_touched: timing.counters.blocks_touched,
        }
    }
}
