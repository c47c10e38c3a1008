//! Compressed sparse row storage, row-major dense storage, and the reference
//! kernels every optimized path is checked against.
//!
//! `CsrMatrix` is canonical: rows are sorted by column, hold no duplicates,
//! and every column index is in range. Both types are immutable once built.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest dense materialization `dense_from_csr` will perform (elements).
pub const DEFAULT_DENSE_LIMIT: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from raw CSR arrays, validating every invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::LengthMismatch {
                expected: n_rows + 1,
                found: row_ptr.len(),
            });
        }
        if col_idx.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: col_idx.len(),
                found: values.len(),
            });
        }
        if row_ptr[0] != 0 {
            return Err(Error::InvalidStructure("row_ptr[0] must be 0".into()));
        }
        if row_ptr[n_rows] != col_idx.len() {
            return Err(Error::InvalidStructure(format!(
                "row_ptr ends at {} but nnz is {}",
                row_ptr[n_rows],
                col_idx.len()
            )));
        }
        for (row, w) in row_ptr.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(Error::InvalidStructure(format!(
                    "row_ptr decreases at row {row}"
                )));
            }
            let cols = &col_idx[w[0]..w[1]];
            for (i, &c) in cols.iter().enumerate() {
                if c >= n_cols {
                    return Err(Error::IndexOutOfRange {
                        row,
                        col: c,
                        n_rows,
                        n_cols,
                    });
                }
                if i > 0 && cols[i - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "columns of row {row} are not strictly increasing"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Builds a canonical matrix from unordered `(row, col, value)` triplets.
    /// Duplicate coordinates are summed. Entries whose (summed) value is zero
    /// are dropped unless `keep_zeros` is set.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
        keep_zeros: bool,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= n_rows || c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
        }
        // stable: duplicates are summed in input order
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            let mut j = i + 1;
            while j < entries.len() && entries[j].0 == r && entries[j].1 == c {
                v += entries[j].2;
                j += 1;
            }
            if keep_zeros || v != T::zero() {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
            i = j;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Assembles a matrix from per-row `(col, value)` lists that are already
    /// sorted and duplicate-free. Used by the generators and permutations.
    pub(crate) fn from_sorted_rows(n_rows: usize, n_cols: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        debug_assert_eq!(rows.len(), n_rows);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!(c < n_cols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row_cols(&self, row: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn row_values(&self, row: usize) -> &[T] {
        &self.values[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    /// Iterates over `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            self.row_cols(r)
                .iter()
                .zip(self.row_values(r))
                .map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Value at `(row, col)`; zero when not stored.
    pub fn get(&self, row: usize, col: usize) -> T {
        let cols = self.row_cols(row);
        match cols.binary_search(&col) {
            Ok(i) => self.row_values(row)[i],
            Err(_) => T::zero(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for (r, c, v) in self.triplets() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn cast<U: Scalar>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<T>) -> Result<Self> {
        let expected = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| Error::InvalidArgument("dense size overflows usize".into()))?;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::LengthMismatch {
                    expected: n_cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub(crate) fn row_mut(&mut self, row: usize) -> &mut [T] {
        &mut self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }
}

fn check_inner(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a.1 != b.0 {
        return Err(Error::DimensionMismatch {
            op,
            left_rows: a.0,
            left_cols: a.1,
            right_rows: b.0,
            right_cols: b.1,
        });
    }
    Ok(())
}

/// Reference SpMM, `C = A·B`. Each output row accumulates the row's entries in
/// ascending column order, starting from zero.
pub fn csr_spmm_reference<T: Scalar>(a: &CsrMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_inner(
        "csr_spmm_reference",
        (a.n_rows(), a.n_cols()),
        (b.n_rows(), b.n_cols()),
    )?;
    let n = b.n_cols();
    let mut c = DenseMatrix::zeros(a.n_rows(), n);
    for r in 0..a.n_rows() {
        let out = c.row_mut(r);
        for (&k, &v) in a.row_cols(r).iter().zip(a.row_values(r)) {
            let b_row = b.row(k);
            for j in 0..n {
                out[j] += v * b_row[j];
            }
        }
    }
    Ok(c)
}

pub fn dense_from_csr<T: Scalar>(a: &CsrMatrix<T>) -> Result<DenseMatrix<T>> {
    dense_from_csr_with_limit(a, DEFAULT_DENSE_LIMIT)
}

pub fn dense_from_csr_with_limit<T: Scalar>(a: &CsrMatrix<T>, limit: usize) -> Result<DenseMatrix<T>> {
    let elements = a.n_rows().saturating_mul(a.n_cols());
    if elements > limit {
        return Err(Error::SizeLimit { elements, limit });
    }
    let mut d = DenseMatrix::zeros(a.n_rows(), a.n_cols());
    for (r, c, v) in a.triplets() {
        d.data[r * a.n_cols() + c] = v;
    }
    Ok(d)
}

/// Textbook triple loop; `k` runs in ascending order for each output element.
pub fn dense_gemm_reference<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    check_inner(
        "dense_gemm_reference",
        (a.n_rows(), a.n_cols()),
        (b.n_rows(), b.n_cols()),
    )?;
    let (m, kk, n) = (a.n_rows(), a.n_cols(), b.n_cols());
    let mut c = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for k in 0..kk {
                acc += a.get(i, k) * b.get(k, j);
            }
            c.data[i * n + j] = acc;
        }
    }
    Ok(c)
}

/// Largest elementwise relative error `|x - y| / (|y| + 1e-30)`, with `y` the
/// reference. Returns infinity on a shape mismatch.
pub fn max_relative_error<T: Scalar>(got: &DenseMatrix<T>, reference: &DenseMatrix<T>) -> f64 {
    if got.n_rows() != reference.n_rows() || got.n_cols() != reference.n_cols() {
        return f64::INFINITY;
    }
    got.data()
        .iter()
        .zip(reference.data())
        .map(|(x, y)| {
            let (x, y) = (x.as_f64(), y.as_f64());
            (x - y).abs() / (y.abs() + 1e-30)
        })
        .fold(0.0, f64::max)
}
