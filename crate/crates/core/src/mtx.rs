//! Matrix Market coordinate format (`real`, `integer`, `pattern` fields with
//! `general` or `symmetric` storage).
//!
//! Reading always yields a canonical [`CsrMatrix`]: 1-based indices become
//! 0-based, symmetric storage is expanded, pattern entries get value 1,
//! duplicates are summed, and explicit zeros are dropped unless
//! [`ReadOptions::keep_explicit_zeros`] is set.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Retain entries whose stored value is zero as structural nonzeros.
    pub keep_explicit_zeros: bool,
}

pub fn read_matrix_market<T: Scalar, R: BufRead>(source: R) -> Result<CsrMatrix<T>> {
    read_matrix_market_with(source, ReadOptions::default())
}

pub fn read_matrix_market_file<T: Scalar>(path: impl AsRef<Path>, opts: ReadOptions) -> Result<CsrMatrix<T>> {
    let f = File::open(path)?;
    read_matrix_market_with(BufReader::new(f), opts)
}

fn parse_header(line: &str) -> Result<(Field, bool)> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
        return Err(Error::parse(1, "expected '%%MatrixMarket matrix coordinate <field> <symmetry>'"));
    }
    if tokens[1] != "matrix" {
        return Err(Error::parse(1, format!("unknown object '{}'", tokens[1])));
    }
    match tokens[2].as_str() {
        "coordinate" => {}
        "array" => return Err(Error::Unsupported("array (dense) Matrix Market format".into())),
        other => return Err(Error::parse(1, format!("unknown format '{other}'"))),
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        "complex" => return Err(Error::Unsupported("complex field".into())),
        other => return Err(Error::parse(1, format!("unknown field '{other}'"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        "hermitian" => return Err(Error::Unsupported("hermitian symmetry".into())),
        "skew-symmetric" => return Err(Error::Unsupported("skew-symmetric symmetry".into())),
        other => return Err(Error::parse(1, format!("unknown symmetry '{other}'"))),
    };
    Ok((field, symmetric))
}

fn parse_index(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(line, format!("missing {what}")))?;
    tok.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{tok}'")))
}

pub fn read_matrix_market_with<T: Scalar, R: BufRead>(source: R, opts: ReadOptions) -> Result<CsrMatrix<T>> {
    let mut lines = source.lines().enumerate();

    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::parse(1, "empty input")),
    };
    let (field, symmetric) = parse_header(&header)?;

    // size line: first non-comment, non-blank line after the header
    let mut size = None;
    for (i, line) in lines.by_ref() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let m = parse_index(it.next(), i + 1, "row count")?;
        let n = parse_index(it.next(), i + 1, "column count")?;
        let nnz = parse_index(it.next(), i + 1, "entry count")?;
        if it.next().is_some() {
            return Err(Error::parse(i + 1, "trailing tokens on size line"));
        }
        size = Some((m, n, nnz));
        break;
    }
    let (n_rows, n_cols, declared) = size.ok_or_else(|| Error::parse(1, "missing size line"))?;
    if symmetric && n_rows != n_cols {
        return Err(Error::parse(1, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * declared } else { declared });
    let mut seen = 0usize;
    for (i, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let ln = i + 1;
        if seen == declared {
            return Err(Error::parse(ln, format!("more than the declared {declared} entries")));
        }
        let mut it = t.split_whitespace();
        let r = parse_index(it.next(), ln, "row index")?;
        let c = parse_index(it.next(), ln, "column index")?;
        if r == 0 || c == 0 || r > n_rows || c > n_cols {
            return Err(Error::IndexOutOfRange {
                row: r,
                col: c,
                n_rows,
                n_cols,
            });
        }
        let v = match field {
            Field::Pattern => T::one(),
            Field::Real | Field::Integer => {
                let tok = it.next().ok_or_else(|| Error::parse(ln, "missing value"))?;
                if field == Field::Integer && tok.parse::<i64>().is_err() {
                    return Err(Error::parse(ln, format!("invalid integer '{tok}'")));
                }
                tok.parse::<T>()
                    .map_err(|_| Error::parse(ln, format!("invalid value '{tok}'")))?
            }
        };
        if it.next().is_some() {
            return Err(Error::parse(ln, "trailing tokens on entry line"));
        }
        let (r, c) = (r - 1, c - 1);
        triplets.push((r, c, v));
        if symmetric && r != c {
            triplets.push((c, r, v));
        }
        seen += 1;
    }
    if seen != declared {
        return Err(Error::parse(
            0,
            format!("expected {declared} entries, found {seen}"),
        ));
    }
    CsrMatrix::from_triplets(n_rows, n_cols, triplets, opts.keep_explicit_zeros)
}

/// Writes `a` as `coordinate real general`. Values use the shortest decimal
/// form that parses back to the same bits.
pub fn write_matrix_market<T: Scalar, W: Write>(a: &CsrMatrix<T>, mut out: W) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (r, c, v) in a.triplets() {
        writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix_market_file<T: Scalar>(a: &CsrMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    write_matrix_market(a, BufWriter::new(f))
}
