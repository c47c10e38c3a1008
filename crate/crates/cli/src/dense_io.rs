//! Plain-text dense matrices: one row per line, whitespace-separated values.
//! Blank lines and lines starting with `#` are ignored.

use std::io::{BufRead, Write};

use anyhow::{bail, Context, Result};
use bspmm::{DenseMatrix, Scalar};

pub fn read_dense<T: Scalar, R: BufRead>(input: R) -> Result<DenseMatrix<T>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<T>()
                    .map_err(|_| anyhow::anyhow!("line {}: bad value {tok:?}", i + 1))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                bail!("line {}: expected {} values, found {}", i + 1, first.len(), row.len());
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows).context("building dense matrix")
}

pub fn write_dense<T: Scalar, W: Write>(d: &DenseMatrix<T>, mut out: W) -> Result<()> {
    for r in 0..d.n_rows() {
        let mut sep = "";
        for v in d.row(r) {
            write!(out, "{sep}{v}")?;
            sep = " ";
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
