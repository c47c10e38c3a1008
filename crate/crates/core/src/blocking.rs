//! Blocked CSR: fixed `h×w` dense blocks aligned to multiples of `h` and `w`.
//!
//! Block `(i, j)` holds every entry `(k, l)` with `k / h == i` and `l / w == j`.
//! Only blocks containing at least one structural entry of the source are
//! stored; positions inside a stored block that were not structural (including
//! positions beyond a ragged matrix border) are zero padding. The block index
//! arrays mirror CSR exactly, and each block occupies `h·w` consecutive
//! row-major values.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::csr::CsrMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockDims {
    pub h: usize,
    pub w: usize,
}

impl BlockDims {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "block dimensions must be positive, got {h}x{w}"
            )));
        }
        Ok(Self { h, w })
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }

    /// Swaps height and width; the blocking seen by the transpose.
    pub fn transposed(&self) -> Self {
        Self {
            h: self.w,
            w: self.h,
        }
    }
}

impl Default for BlockDims {
    fn default() -> Self {
        Self { h: 16, w: 8 }
    }
}

impl fmt::Display for BlockDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.h, self.w)
    }
}

impl FromStr for BlockDims {
    type Err = Error;

    /// Parses `HxW`, e.g. `16x8`.
    fn from_str(s: &str) -> Result<Self> {
        let (h, w) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::InvalidArgument(format!("expected HxW, got '{s}'")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("expected HxW, got '{s}'")))
        };
        Self::new(parse(h)?, parse(w)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    dims: BlockDims,
    block_row_ptr: Vec<usize>,
    block_col_idx: Vec<usize>,
    block_values: Vec<T>,
}

impl<T: Scalar> BcsrMatrix<T> {
    /// Assembles a matrix from raw parts, validating the index structure.
    pub fn from_parts(
        n_rows: usize,
        n_cols: usize,
        dims: BlockDims,
        block_row_ptr: Vec<usize>,
        block_col_idx: Vec<usize>,
        block_values: Vec<T>,
    ) -> Result<Self> {
        let dims = BlockDims::new(dims.h, dims.w)?;
        let n_br = n_rows.div_ceil(dims.h);
        let n_bc = n_cols.div_ceil(dims.w);
        if block_row_ptr.len() != n_br + 1 {
            return Err(Error::LengthMismatch {
                expected: n_br + 1,
                found: block_row_ptr.len(),
            });
        }
        let n_e = block_col_idx.len();
        if block_row_ptr[0] != 0 || block_row_ptr[n_br] != n_e {
            return Err(Error::InvalidStructure(
                "block_row_ptr must start at 0 and end at n_e".into(),
            ));
        }
        if block_values.len() != n_e * dims.area() {
            return Err(Error::LengthMismatch {
                expected: n_e * dims.area(),
                found: block_values.len(),
            });
        }
        for (br, win) in block_row_ptr.windows(2).enumerate() {
            if win[0] > win[1] {
                return Err(Error::InvalidStructure(format!(
                    "block_row_ptr decreases at block row {br}"
                )));
            }
            let cols = &block_col_idx[win[0]..win[1]];
            for (i, &c) in cols.iter().enumerate() {
                if c >= n_bc {
                    return Err(Error::InvalidStructure(format!(
                        "block column {c} out of range in block row {br}"
                    )));
                }
                if i > 0 && cols[i - 1] >= c {
                    return Err(Error::InvalidStructure(format!(
                        "block columns of block row {br} are not strictly increasing"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            dims,
            block_row_ptr,
            block_col_idx,
            block_values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn dims(&self) -> BlockDims {
        self.dims
    }

    pub fn n_block_rows(&self) -> usize {
        self.block_row_ptr.len() - 1
    }

    pub fn n_block_cols(&self) -> usize {
        self.n_cols.div_ceil(self.dims.w)
    }

    /// Number of stored blocks, `n_e`.
    pub fn n_blocks(&self) -> usize {
        self.block_col_idx.len()
    }

    /// Size of the full block grid, `⌈n_rows/h⌉·⌈n_cols/w⌉`.
    pub fn grid_blocks(&self) -> usize {
        self.n_block_rows() * self.n_block_cols()
    }

    pub fn block_row_ptr(&self) -> &[usize] {
        &self.block_row_ptr
    }

    pub fn block_col_idx(&self) -> &[usize] {
        &self.block_col_idx
    }

    pub fn block_values(&self) -> &[T] {
        &self.block_values
    }

    /// Dense row-major contents of stored block `idx`.
    pub fn block(&self, idx: usize) -> &[T] {
        let a = self.dims.area();
        &self.block_values[idx * a..(idx + 1) * a]
    }

    /// Range of stored-block indices belonging to `block_row`.
    pub fn block_row_range(&self, block_row: usize) -> std::ops::Range<usize> {
        self.block_row_ptr[block_row]..self.block_row_ptr[block_row + 1]
    }

    pub fn blocks_per_row(&self) -> Vec<usize> {
        self.block_row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Converts CSR to BCSR, materializing exactly the blocks that contain at
/// least one structural entry.
pub fn to_bcsr<T: Scalar>(a: &CsrMatrix<T>, dims: BlockDims) -> BcsrMatrix<T> {
    let BlockDims { h, w } = dims;
    let n_br = a.n_rows().div_ceil(h);
    let n_bc = a.n_cols().div_ceil(w);
    let area = dims.area();

    // slot[bc] is the block index of block column bc within the current block
    // row, valid only when stamp[bc] == current block row + 1
    let mut stamp = vec![0usize; n_bc];
    let mut slot = vec![0usize; n_bc];
    let mut row_cols: Vec<usize> = Vec::new();

    let mut block_row_ptr = Vec::with_capacity(n_br + 1);
    let mut block_col_idx = Vec::new();
    let mut block_values = Vec::new();
    block_row_ptr.push(0);

    for br in 0..n_br {
        let tag = br + 1;
        let rows = br * h..((br + 1) * h).min(a.n_rows());
        row_cols.clear();
        for r in rows.clone() {
            for &c in a.row_cols(r) {
                let bc = c / w;
                if stamp[bc] != tag {
                    stamp[bc] = tag;
                    row_cols.push(bc);
                }
            }
        }
        row_cols.sort_unstable();
        let base = block_col_idx.len();
        for (i, &bc) in row_cols.iter().enumerate() {
            slot[bc] = base + i;
            block_col_idx.push(bc);
        }
        block_values.resize(block_col_idx.len() * area, T::zero());
        for r in rows {
            let local_r = r - br * h;
            for (&c, &v) in a.row_cols(r).iter().zip(a.row_values(r)) {
                let b = slot[c / w];
                block_values[b * area + local_r * w + c % w] = v;
            }
        }
        block_row_ptr.push(block_col_idx.len());
    }

    BcsrMatrix {
        n_rows: a.n_rows(),
        n_cols: a.n_cols(),
        dims,
        block_row_ptr,
        block_col_idx,
        block_values,
    }
}

/// Expands BCSR back to CSR, keeping only nonzero-valued block entries.
pub fn from_bcsr<T: Scalar>(ab: &BcsrMatrix<T>) -> CsrMatrix<T> {
    let BlockDims { h, w } = ab.dims;
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); ab.n_rows];
    for br in 0..ab.n_block_rows() {
        for b in ab.block_row_range(br) {
            let bc = ab.block_col_idx[b];
            let block = ab.block(b);
            for lr in 0..h {
                let r = br * h + lr;
                if r >= ab.n_rows {
                    break;
                }
                for lc in 0..w {
                    let c = bc * w + lc;
                    if c >= ab.n_cols {
                        break;
                    }
                    let v = block[lr * w + lc];
                    if v != T::zero() {
                        rows[r].push((c, v));
                    }
                }
            }
        }
    }
    // blocks are visited in ascending block column, so each row is sorted
    CsrMatrix::from_sorted_rows(ab.n_rows, ab.n_cols, rows)
}

/// Bounds on the stored-block count of any matrix with `nnz` structural
/// entries: `⌈nnz/(h·w)⌉ ≤ n_e ≤ min(grid blocks, nnz)`.
pub fn block_count_bounds(nnz: usize, n_rows: usize, n_cols: usize, dims: BlockDims) -> Result<(usize, usize)> {
    let cells = n_rows.saturating_mul(n_cols);
    if nnz > cells {
        return Err(Error::InvalidArgument(format!(
            "nnz {nnz} exceeds {n_rows}x{n_cols} matrix capacity"
        )));
    }
    let lower = nnz.div_ceil(dims.area());
    let grid = n_rows.div_ceil(dims.h) * n_cols.div_ceil(dims.w);
    Ok((lower, grid.min(nnz)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub h: usize,
    pub w: usize,
    pub nnz: usize,
    pub n_e: usize,
    pub n_block_rows: usize,
    pub n_block_cols: usize,
    pub blocks_per_row: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation of `blocks_per_row`.
    pub std: f64,
    pub padding_ratio: f64,
    pub density: f64,
}

pub fn block_stats<T: Scalar>(ab: &BcsrMatrix<T>, nnz: usize) -> BlockStats {
    let blocks_per_row = ab.blocks_per_row();
    let (mean, std) = mean_std(&blocks_per_row);
    let n_e = ab.n_blocks();
    let stored = (n_e * ab.dims.area()) as f64;
    let (padding_ratio, density) = if n_e == 0 {
        (0.0, 0.0)
    } else {
        let density = nnz as f64 / stored;
        (1.0 - density, density)
    };
    BlockStats {
        h: ab.dims.h,
        w: ab.dims.w,
        nnz,
        n_e,
        n_block_rows: ab.n_block_rows(),
        n_block_cols: ab.n_block_cols(),
        blocks_per_row,
        mean,
        std,
        padding_ratio,
        density,
    }
}

fn mean_std(xs: &[usize]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<usize>() as f64 / n;
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

const DUMP_MAGIC: &[u8; 4] = b"BCSR";
const DUMP_VERSION: u32 = 1;

/// Writes the binary dump: magic `BCSR`, then little-endian `u32` version,
/// `u32` scalar width in bytes, `u64` n_rows, n_cols, h, w, n_e, followed by
/// `block_row_ptr` and `block_col_idx` as `u64` and the block values.
pub fn write_bcsr<T: Scalar, W: Write>(ab: &BcsrMatrix<T>, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(
        48 + 8 * (ab.block_row_ptr.len() + ab.block_col_idx.len()) + T::BYTES * ab.block_values.len(),
    );
    buf.extend_from_slice(DUMP_MAGIC);
    buf.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    buf.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
    for x in [ab.n_rows, ab.n_cols, ab.dims.h, ab.dims.w, ab.n_blocks()] {
        buf.extend_from_slice(&(x as u64).to_le_bytes());
    }
    for &x in ab.block_row_ptr.iter().chain(&ab.block_col_idx) {
        buf.extend_from_slice(&(x as u64).to_le_bytes());
    }
    for &v in &ab.block_values {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_bcsr<T: Scalar, R: Read>(mut input: R) -> Result<BcsrMatrix<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4)? != DUMP_MAGIC {
        return Err(Error::BadDump("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != DUMP_VERSION {
        return Err(Error::BadDump(format!("unsupported version {version}")));
    }
    let width = cur.u32()? as usize;
    if width != T::BYTES {
        return Err(Error::BadDump(format!(
            "dump holds {width}-byte scalars, expected {} ({})",
            T::BYTES,
            T::NAME
        )));
    }
    let n_rows = cur.usize()?;
    let n_cols = cur.usize()?;
    let h = cur.usize()?;
    let w = cur.usize()?;
    let n_e = cur.usize()?;
    let dims = BlockDims::new(h, w).map_err(|e| Error::BadDump(e.to_string()))?;
    let n_br = n_rows.div_ceil(h);

    let ptr = (0..=n_br).map(|_| cur.usize()).collect::<Result<Vec<_>>>()?;
    let cols = (0..n_e).map(|_| cur.usize()).collect::<Result<Vec<_>>>()?;
    let n_vals = n_e
        .checked_mul(dims.area())
        .ok_or_else(|| Error::BadDump("value count overflows".into()))?;
    let raw = cur.take(n_vals.checked_mul(T::BYTES).ok_or_else(|| Error::BadDump("value count overflows".into()))?)?;
    let vals: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
    if cur.pos != bytes.len() {
        return Err(Error::BadDump("trailing bytes".into()));
    }
    BcsrMatrix::from_parts(n_rows, n_cols, dims, ptr, cols, vals).map_err(|e| Error::BadDump(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::BadDump("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::BadDump(format!("value {v} does not fit usize")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_csr(n_rows: usize, n_cols: usize) -> CsrMatrix<f64> {
        CsrMatrix::from_triplets(
            n_rows,
            n_cols,
            (0..n_rows).flat_map(|r| (0..n_cols).map(move |c| (r, c, 1.0 + (r * n_cols + c) as f64))),
            false,
        )
        .unwrap()
    }

    #[test]
    fn dims_parse() {
        assert_eq!("16x8".parse::<BlockDims>().unwrap(), BlockDims { h: 16, w: 8 });
        assert_eq!("4X2".parse::<BlockDims>().unwrap(), BlockDims { h: 4, w: 2 });
        assert!("0x8".parse::<BlockDims>().is_err());
        assert!("16".parse::<BlockDims>().is_err());
        assert!("ax8".parse::<BlockDims>().is_err());
        assert_eq!(BlockDims::default().to_string(), "16x8");
    }

    #[test]
    fn single_block() {
        let a = CsrMatrix::<f64>::from_triplets(16, 8, vec![(0, 0, 2.0)], false).unwrap();
        let b = to_bcsr(&a, BlockDims::default());
        assert_eq!(b.n_blocks(), 1);
        assert_eq!(b.block_values().len(), 128);
        assert_eq!(b.block_values().iter().filter(|&&v| v == 0.0).count(), 127);
        assert_eq!(b.block_values()[0], 2.0);
    }

    #[test]
    fn fully_dense_grid() {
        let a = dense_csr(32, 16);
        let b = to_bcsr(&a, BlockDims::default());
        assert_eq!(b.n_blocks(), 4);
        assert_eq!(block_count_bounds(a.nnz(), 32, 16, b.dims()).unwrap(), (4, 4));
        assert_eq!(from_bcsr(&b), a);
        // block (1,1) starts at entry (16, 8)
        assert_eq!(b.block(3)[0], a.get(16, 8));
    }

    #[test]
    fn diagonal_64() {
        let a = CsrMatrix::<f64>::identity(64);
        assert_eq!(to_bcsr(&a, BlockDims::default()).n_blocks(), 8);
    }

    #[test]
    fn from_bcsr_index_arithmetic() {
        let dims = BlockDims::default();
        let mut vals = vec![0.0f64; 128];
        vals[3 * 8 + 2] = 5.0;
        let ab = BcsrMatrix::from_parts(16, 8, dims, vec![0, 1], vec![0], vals).unwrap();
        let a = from_bcsr(&ab);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(3, 2), 5.0);

        let empty = to_bcsr(&CsrMatrix::<f64>::zeros(5, 9), dims);
        assert_eq!(empty.n_blocks(), 0);
        assert_eq!(from_bcsr(&empty), CsrMatrix::zeros(5, 9));
    }

    #[test]
    fn ragged_borders() {
        let a = dense_csr(5, 7);
        let dims = BlockDims::new(4, 3).unwrap();
        let b = to_bcsr(&a, dims);
        assert_eq!(b.n_block_rows(), 2);
        assert_eq!(b.n_block_cols(), 3);
        assert_eq!(b.n_blocks(), 6);
        assert_eq!(from_bcsr(&b), a);
    }

    #[test]
    fn bounds_examples() {
        let d = BlockDims::default();
        assert_eq!(block_count_bounds(128, 16, 8, d).unwrap(), (1, 1));
        assert_eq!(block_count_bounds(1, 1000, 3, d).unwrap(), (1, 1));
        assert_eq!(block_count_bounds(1, 16, 8, BlockDims::new(2, 2).unwrap()).unwrap(), (1, 1));
        assert_eq!(block_count_bounds(1024, 128, 128, d).unwrap(), (8, 128));
        assert_eq!(block_count_bounds(0, 0, 0, d).unwrap(), (0, 0));
        assert!(block_count_bounds(5, 2, 2, d).is_err());
    }

    #[test]
    fn stats_examples() {
        let d = BlockDims::new(1, 1).unwrap();
        let empty = to_bcsr(&CsrMatrix::<f64>::zeros(3, 3), d);
        let s = block_stats(&empty, 0);
        assert_eq!((s.mean, s.std, s.padding_ratio, s.density), (0.0, 0.0, 0.0, 0.0));

        let uniform = CsrMatrix::<f64>::from_triplets(
            4,
            2,
            (0..4).flat_map(|r| [(r, 0, 1.0), (r, 1, 1.0)]),
            false,
        )
        .unwrap();
        let s = block_stats(&to_bcsr(&uniform, d), 8);
        assert_eq!((s.mean, s.std), (2.0, 0.0));

        let skew = CsrMatrix::<f64>::from_triplets(
            2,
            3,
            vec![(0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (1, 2, 1.0)],
            false,
        )
        .unwrap();
        let s = block_stats(&to_bcsr(&skew, d), 4);
        assert_eq!(s.blocks_per_row, vec![1, 3]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));

        let one = CsrMatrix::<f64>::from_triplets(16, 8, vec![(0, 0, 1.0)], false).unwrap();
        let s = block_stats(&to_bcsr(&one, BlockDims::default()), 1);
        assert!((s.density - 1.0 / 128.0).abs() < 1e-15);
        assert!((s.padding_ratio + s.density - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dump_round_trip_and_rejects() {
        let a = dense_csr(9, 11);
        let b = to_bcsr(&a, BlockDims::new(4, 4).unwrap()).clone();
        let mut buf = Vec::new();
        write_bcsr(&b, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"BCSR");
        let back: BcsrMatrix<f64> = read_bcsr(buf.as_slice()).unwrap();
        assert_eq!(back, b);

        assert!(matches!(read_bcsr::<f32, _>(buf.as_slice()), Err(Error::BadDump(_))));
        assert!(read_bcsr::<f64, _>(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_bcsr::<f64, _>(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_bcsr::<f64, _>(bad.as_slice()).is_err());
    }

    #[test]
    fn from_parts_validates() {
        let d = BlockDims::new(2, 2).unwrap();
        assert!(BcsrMatrix::<f32>::from_parts(2, 2, d, vec![0, 1], vec![1], vec![0.0; 4]).is_err());
        assert!(BcsrMatrix::<f32>::from_parts(2, 4, d, vec![0, 2], vec![1, 0], vec![0.0; 8]).is_err());
        assert!(BcsrMatrix::<f32>::from_parts(2, 4, d, vec![0, 1], vec![1], vec![0.0; 3]).is_err());
        assert!(BcsrMatrix::<f32>::from_parts(2, 4, d, vec![0, 1], vec![1], vec![0.0; 4]).is_ok());
    }
}
