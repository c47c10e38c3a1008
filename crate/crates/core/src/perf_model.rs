//! Linear runtime model `t_total = t_e · n_e + t_init`, fitted by ordinary
//! least squares over measured kernel runs.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blocking::{to_bcsr, BlockDims};
use crate::csr::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spmm::{bcsr_spmm_instrumented, SpmmOptions};
use crate::synth::{gen_band, stream_rng, BandSpec, ValueDist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub n_e: usize,
    /// Mean wall time of the timed repeats, in seconds.
    pub t_total_s: f64,
    /// Coefficient of variation (σ/μ) of the timed repeats.
    pub cv: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    /// Seconds per block.
    pub t_e: f64,
    /// Fixed overhead in seconds.
    pub t_init: f64,
    pub r2: f64,
    /// Set when the raw slope was negative and has been clamped to zero.
    pub degenerate: bool,
    pub n_points: usize,
}

impl PerfModel {
    pub fn predict(&self, n_e: usize) -> f64 {
        predict(self, n_e)
    }
}

pub fn predict(m: &PerfModel, n_e: usize) -> f64 {
    m.t_e * n_e as f64 + m.t_init
}

/// OLS of `t_total_s` on `n_e`. Needs at least three measurements spanning at
/// least two distinct block counts.
pub fn fit(ms: &[Measurement]) -> Result<PerfModel> {
    if ms.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 measurements, got {}",
            ms.len()
        )));
    }
    if ms.iter().all(|m| m.n_e == ms[0].n_e) {
        return Err(Error::DegenerateFit("all measurements share one n_e".into()));
    }
    if let Some(m) = ms.iter().find(|m| !m.t_total_s.is_finite()) {
        return Err(Error::DegenerateFit(format!("non-finite time {}", m.t_total_s)));
    }

    let n = ms.len() as f64;
    let x_mean = ms.iter().map(|m| m.n_e as f64).sum::<f64>() / n;
    let y_mean = ms.iter().map(|m| m.t_total_s).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for m in ms {
        let dx = m.n_e as f64 - x_mean;
        let dy = m.t_total_s - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let mut slope = sxy / sxx;
    let degenerate = slope < 0.0;
    if degenerate {
        slope = 0.0;
    }
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = ms
        .iter()
        .map(|m| (m.t_total_s - (slope * m.n_e as f64 + intercept)).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PerfModel {
        t_e: slope,
        t_init: intercept,
        r2,
        degenerate,
        n_points: ms.len(),
    })
}

/// One band-sweep point with the structural counts behind its timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bandwidth: usize,
    pub nnz: usize,
    pub grid_blocks: usize,
    pub tile_mma_calls: u64,
    pub repeats: usize,
    pub measurement: Measurement,
}

/// Mean and coefficient of variation (population σ over μ).
pub fn mean_cv(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

pub fn sweep_label(opts: &SpmmOptions, n_rhs: usize) -> String {
    format!(
        "skip_empty={},dims={}x{},N={}",
        if opts.skip_empty { "on" } else { "off" },
        opts.tile.m,
        opts.tile.k,
        n_rhs
    )
}

/// Times `bcsr_spmm` on `n×n` band matrices, one point per half-bandwidth.
/// Each time is the mean of `repeats` runs after one untimed warm-up; matrix
/// generation and blocking are not timed.
pub fn sweep_band_detailed<T: Scalar>(
    n: usize,
    bandwidths: &[usize],
    n_rhs: usize,
    opts: &SpmmOptions,
    repeats: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    if let Some(&b) = bandwidths.iter().find(|&&b| n == 0 || b >= n) {
        return Err(Error::InvalidArgument(format!(
            "half-bandwidth {b} out of range for n = {n}"
        )));
    }
    let dims = BlockDims::new(opts.tile.m, opts.tile.k)?;
    let mut rng = stream_rng(seed, 7);
    let b_data: Vec<T> = (0..n * n_rhs)
        .map(|_| T::from_f64_lossy(rand::Rng::gen_range(&mut rng, -1.0..1.0)))
        .collect();
    let rhs = DenseMatrix::new(n, n_rhs, b_data)?;
    let label = sweep_label(opts, n_rhs);

    let mut out = Vec::with_capacity(bandwidths.len());
    for &bw in bandwidths {
        let a = gen_band::<T>(&BandSpec {
            n,
            b: bw,
            seed,
            value_dist: ValueDist::Uniform,
        })?;
        let ab = to_bcsr(&a, dims);
        let (_, counters) = bcsr_spmm_instrumented(&ab, &rhs, opts)?;
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            let c = bcsr_spmm_instrumented(&ab, &rhs, opts)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(c);
        }
        let (t, cv) = mean_cv(&times);
        out.push(SweepPoint {
            bandwidth: bw,
            nnz: a.nnz(),
            grid_blocks: ab.grid_blocks(),
            tile_mma_calls: counters.tile_mma_calls,
            repeats,
            measurement: Measurement {
                n_e: ab.n_blocks(),
                t_total_s: t,
                cv,
                label: label.clone(),
            },
        });
    }
    Ok(out)
}

pub fn sweep_band<T: Scalar>(
    n: usize,
    bandwidths: &[usize],
    n_rhs: usize,
    opts: &SpmmOptions,
    repeats: usize,
) -> Result<Vec<Measurement>> {
    Ok(sweep_band_detailed::<T>(n, bandwidths, n_rhs, opts, repeats, 0)?
        .into_iter()
        .map(|p| p.measurement)
        .collect())
}

/// CSV with header `n_e,t_total_s,cv,label`.
pub fn write_measurements_csv<W: Write>(ms: &[Measurement], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for m in ms {
        w.serialize(m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measurements_csv<R: Read>(input: R) -> Result<Vec<Measurement>> {
    let mut r = csv::Reader::from_reader(input);
    let ms = r.deserialize().collect::<std::result::Result<Vec<Measurement>, _>>()?;
    Ok(ms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[(usize, f64)]) -> Vec<Measurement> {
        points
            .iter()
            .map(|&(n_e, t)| Measurement {
                n_e,
                t_total_s: t,
                cv: 0.0,
                label: "x".into(),
            })
            .collect()
    }

    #[test]
    fn exact_line() {
        let m = fit(&line(&[(1, 7.0), (2, 9.0), (3, 11.0)])).unwrap();
        assert_eq!((m.t_e, m.t_init, m.r2), (2.0, 5.0, 1.0));
        assert!(!m.degenerate);
        assert_eq!(predict(&m, 0), 5.0);
        assert_eq!(predict(&m, 10), 25.0);
        assert_eq!(m.predict(1000), 2005.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit(&line(&[(1, 1.0), (2, 2.0)])).is_err());
        assert!(fit(&line(&[(4, 1.0), (4, 2.0), (4, 3.0)])).is_err());
        assert!(fit(&line(&[(1, 1.0), (2, f64::NAN), (3, 3.0)])).is_err());
    }

    #[test]
    fn negative_slope_is_clamped() {
        let m = fit(&line(&[(1, 3.0), (2, 2.0), (3, 1.0)])).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.t_e, 0.0);
        assert_eq!(m.t_init, 2.0);
        assert!(m.r2 <= 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let ms = line(&[(3, 0.5), (10, 1.25e-3)]);
        let mut buf = Vec::new();
        write_measurements_csv(&ms, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n_e,t_total_s,cv,label\n"));
        assert_eq!(read_measurements_csv(buf.as_slice()).unwrap(), ms);
    }

    #[test]
    fn mean_cv_basics() {
        assert_eq!(mean_cv(&[]), (0.0, 0.0));
        let (m, cv) = mean_cv(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(cv, 0.5);
    }

    #[test]
    fn sweep_rejects_bad_args() {
        let opts = SpmmOptions::default();
        assert!(sweep_band::<f32>(64, &[8], 8, &opts, 0).is_err());
        assert!(sweep_band::<f32>(64, &[64], 8, &opts, 1).is_err());
    }
}
