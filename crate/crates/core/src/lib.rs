//! Block-sparse matrix × dense matrix multiplication.
//!
//! The pipeline reads a sparse matrix as CSR, optionally reorders its rows so
//! that rows with similar block-column patterns share block rows, converts it
//! to blocked CSR with fixed `h×w` dense blocks, and multiplies it by a dense
//! operand with a tile-parallel kernel built around one fixed-shape
//! multiply-accumulate microkernel. Runtime is modeled as linear in the number
//! of stored blocks.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations.

pub mod bench;
pub mod blocking;
pub mod csr;
pub mod error;
pub mod mtx;
pub mod perf_model;
pub mod reorder;
pub mod scalar;
pub mod spmm;
pub mod synth;

pub use blocking::{
    block_count_bounds, block_stats, from_bcsr, read_bcsr, to_bcsr, write_bcsr, BcsrMatrix, BlockDims,
    BlockStats,
};
pub use csr::{
    csr_spmm_reference, dense_from_csr, dense_from_csr_with_limit, dense_gemm_reference, max_relative_error,
    CsrMatrix, DenseMatrix,
};
pub use error::{Error, Result};
pub use mtx::{read_matrix_market, read_matrix_market_file, write_matrix_market, write_matrix_market_file, ReadOptions};
pub use perf_model::{fit, predict, sweep_band, Measurement, PerfModel};
pub use reorder::{
    apply_column_permutation, apply_row_permutation, cluster_rows, evaluate_reordering, jaccard_distance, reorder,
    Permutation, ReorderConfig, ReorderMode, ReorderReport, RowPattern,
};
pub use scalar::Scalar;
pub use spmm::{bcsr_spmm, bcsr_spmm_instrumented, spmm_pipeline, tile_mma, PreparedSpmm, SpmmOptions, TileShape, Workers};

pub type CsrF32 = CsrMatrix<f32>;
pub type CsrF64 = CsrMatrix<f64>;
pub type BcsrF32 = BcsrMatrix<f32>;
pub type BcsrF64 = BcsrMatrix<f64>;
pub type DenseF32 = DenseMatrix<f32>;
pub type DenseF64 = DenseMatrix<f64>;
