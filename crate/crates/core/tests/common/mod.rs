#![allow(dead_code)]

use bspmm::synth::{
    gen_band, gen_clustered, gen_uniform_random, stream_rng, BandSpec, ClusterSpec, PrototypeLayout, Shuffle,
    ValueDist,
};
use bspmm::{BlockDims, CsrMatrix, DenseMatrix, Scalar};
use rand::Rng;

pub const ALL_DIMS: [(usize, usize); 3] = [(16, 8), (16, 16), (8, 8)];

pub fn all_dims() -> Vec<BlockDims> {
    ALL_DIMS
        .iter()
        .map(|&(h, w)| BlockDims::new(h, w).unwrap())
        .collect()
}

/// Fixed test corpus: hand fixtures plus band, clustered and random matrices.
pub fn corpus<T: Scalar>() -> Vec<(String, CsrMatrix<T>)> {
    let mut out: Vec<(String, CsrMatrix<T>)> = vec![
        ("empty_0x0".into(), CsrMatrix::zeros(0, 0)),
        ("empty_7x5".into(), CsrMatrix::zeros(7, 5)),
        ("identity_1".into(), CsrMatrix::identity(1)),
        ("identity_100".into(), CsrMatrix::identity(100)),
        (
            "single_corner".into(),
            CsrMatrix::from_triplets(33, 17, vec![(32, 16, T::one())], false).unwrap(),
        ),
    ];
    for (n, b) in [(1, 0), (16, 3), (64, 0), (64, 8), (100, 7), (257, 31), (512, 64)] {
        let a = gen_band(&BandSpec {
            n,
            b,
            seed: 5,
            value_dist: ValueDist::Uniform,
        })
        .unwrap();
        out.push((format!("band_n{n}_b{b}"), a));
    }
    for (i, (k, density, jitter, layout)) in [
        (2, 1.0, 0.0, PrototypeLayout::Disjoint),
        (3, 0.4, 0.05, PrototypeLayout::Disjoint),
        (4, 0.2, 0.1, PrototypeLayout::Overlapping),
        (5, 0.05, 0.0, PrototypeLayout::Overlapping),
    ]
    .into_iter()
    .enumerate()
    {
        let (a, _) = gen_clustered(&ClusterSpec {
            k,
            rows_per_cluster: 40 + 7 * i,
            n_cols: 200 + 33 * i,
            density,
            jitter,
            layout,
            shuffle: Shuffle::Random,
            seed: 100 + i as u64,
            value_dist: ValueDist::Uniform,
        })
        .unwrap();
        out.push((format!("clustered_{i}"), a));
    }
    for (i, (m, n, d)) in [(50, 70, 0.3), (300, 200, 0.01), (128, 128, 0.9), (1000, 999, 0.002), (31, 1, 0.5)]
        .into_iter()
        .enumerate()
    {
        out.push((
            format!("random_{i}"),
            gen_uniform_random(m, n, d, 40 + i as u64).unwrap(),
        ));
    }
    out
}

pub fn random_dense<T: Scalar>(n_rows: usize, n_cols: usize, seed: u64) -> DenseMatrix<T> {
    let mut rng = stream_rng(seed, 99);
    DenseMatrix::new(
        n_rows,
        n_cols,
        (0..n_rows * n_cols)
            .map(|_| T::from_f64_lossy(rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

/// Counts blocks by checking every cell of every grid block.
pub fn brute_force_block_count<T: Scalar>(a: &CsrMatrix<T>, dims: BlockDims) -> usize {
    let n_br = a.n_rows().div_ceil(dims.h);
    let n_bc = a.n_cols().div_ceil(dims.w);
    let mut count = 0;
    for bi in 0..n_br {
        for bj in 0..n_bc {
            let hit = (bi * dims.h..((bi + 1) * dims.h).min(a.n_rows())).any(|r| {
                (bj * dims.w..((bj + 1) * dims.w).min(a.n_cols())).any(|c| a.row_cols(r).binary_search(&c).is_ok())
            });
            count += hit as usize;
        }
    }
    count
}

pub fn bits<T: Scalar>(d: &DenseMatrix<T>) -> Vec<u64> {
    d.data().iter().map(|v| v.as_f64().to_bits()).collect()
}
