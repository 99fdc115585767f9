//! Compressed-row sparse storage with a binary64 master copy and a lazily
//! materialized binary32 cache.

use std::ops::Range;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::precision::Scalar;

/// Rows below this count are multiplied sequentially even with `parallel` on.
#[cfg(feature = "parallel")]
const PAR_ROW_THRESHOLD: usize = 4096;

/// Square or rectangular matrix in CSR format.
///
/// Column indices are strictly increasing within each row. `values` is the
/// source of truth; the binary32 copy is derived from it on first use.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_starts: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    values_low: OnceLock<Vec<f32>>,
}

/// Which vector norm to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    One,
    Two,
    Inf,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn from_raw_parts(
        nrows: usize,
        ncols: usize,
        row_starts: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_starts.len() != nrows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_starts has length {}, expected {}",
                row_starts.len(),
                nrows + 1
            )));
        }
        if row_starts[0] != 0 {
            return Err(Error::InvalidStructure("row_starts[0] must be 0".into()));
        }
        if row_starts[nrows] != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidStructure(
                "row_starts[nrows], col_indices and values disagree on nnz".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_starts[i], row_starts[i + 1]);
            if lo > hi {
                return Err(Error::InvalidStructure(format!(
                    "row_starts decreases at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidStructure(format!(
                    "column indices of row {i} are not strictly increasing"
                )));
            }
            if let Some(&c) = cols.last() {
                if c >= ncols {
                    return Err(Error::IndexOutOfRange {
                        row: i,
                        col: c,
                        nrows,
                        ncols,
                    });
                }
            }
        }
        Ok(Self::from_parts_unchecked(
            nrows,
            ncols,
            row_starts,
            col_indices,
            values,
        ))
    }

    pub(crate) fn from_parts_unchecked(
        nrows: usize,
        ncols: usize,
        row_starts: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_starts.len(), nrows + 1);
        Self {
            nrows,
            ncols,
            row_starts,
            col_indices,
            values,
            values_low: OnceLock::new(),
        }
    }

    /// Assembles a CSR matrix from `(row, col, value)` triplets.
    ///
    /// Duplicates are summed. Within a duplicate group the summands are added
    /// in ascending value order, so the result does not depend on the order
    /// of the input triplets.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    nrows,
                    ncols,
                });
            }
        }
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));

        let mut row_starts = vec![0usize; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_starts[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_starts[i + 1] += row_starts[i];
        }
        Ok(Self::from_parts_unchecked(
            nrows,
            ncols,
            row_starts,
            col_indices,
            values,
        ))
    }

    /// Dense row-major input; exact zeros are not stored.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut row_starts = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_starts.push(0);
        for row in rows {
            assert_eq!(row.len(), ncols, "ragged dense input");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_starts.push(col_indices.len());
        }
        Self::from_parts_unchecked(nrows, ncols, row_starts, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_parts_unchecked(nrows, ncols, vec![0; nrows + 1], Vec::new(), Vec::new())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn row_starts(&self) -> &[usize] {
        &self.row_starts
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_starts[i]..self.row_starts[i + 1];
        (&self.col_indices[r.clone()], &self.values[r])
    }

    /// Binary32 copy of the values, rounded to nearest on first access.
    pub fn values_low(&self) -> &[f32] {
        self.values_low
            .get_or_init(|| self.values.iter().map(|&v| v as f32).collect())
    }

    /// Forces the binary32 cache into existence.
    pub fn materialize_low(&self) {
        let _ = self.values_low();
    }

    pub fn has_low(&self) -> bool {
        self.values_low.get().is_some()
    }

    /// Stored value at `(i, j)`, or `None` when structurally absent.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.nrows {
            let (ci, vi) = self.row(i);
            for (&c, &v) in ci.iter().zip(vi) {
                let dst = next[c];
                cols[dst] = i;
                vals[dst] = v;
                next[c] += 1;
            }
        }
        CsrMatrix::from_parts_unchecked(self.ncols, self.nrows, counts, cols, vals)
    }

    /// `y = A x` in the precision of `T`.
    ///
    /// Each row is accumulated left to right in column order; rows may be
    /// distributed across threads but results are bit-identical either way.
    pub fn spmv<T: Scalar>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                found: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.nrows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn spmv_into<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        let vals = T::matrix_values(self);
        let row_dot = |i: usize| -> T {
            let r = self.row_starts[i]..self.row_starts[i + 1];
            let mut acc = T::zero();
            for (&c, &v) in self.col_indices[r.clone()].iter().zip(&vals[r]) {
                acc += v * x[c];
            }
            acc
        };
        #[cfg(feature = "parallel")]
        if self.nrows >= PAR_ROW_THRESHOLD {
            use rayon::prelude::*;
            y.par_iter_mut()
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
            return;
        }
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = row_dot(i);
        }
    }

    /// `b - A x` in binary64.
    pub fn residual(&self, b: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.nrows {
            return Err(Error::DimensionMismatch {
                expected: self.nrows,
                found: b.len(),
            });
        }
        let ax = self.spmv(x)?;
        Ok(b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect())
    }

    /// Symmetric permutation `Q A Q^T`: entry `(i, j)` moves to `(perm[i], perm[j])`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<CsrMatrix> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                nrows: self.nrows,
                ncols: self.ncols,
            });
        }
        let inverse = invert_permutation(perm, self.nrows)?;
        let mut row_starts = Vec::with_capacity(self.nrows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        row_starts.push(0);
        for &old in &inverse {
            let (cols, vals) = self.row(old);
            scratch.clear();
            scratch.extend(cols.iter().zip(vals).map(|(&c, &v)| (perm[c], v)));
            scratch.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &scratch {
                col_indices.push(c);
                values.push(v);
            }
            row_starts.push(col_indices.len());
        }
        Ok(CsrMatrix::from_parts_unchecked(
            self.nrows,
            self.ncols,
            row_starts,
            col_indices,
            values,
        ))
    }

    /// The square diagonal block covering `range` (rows and columns), re-indexed from zero.
    pub fn diagonal_block(&self, range: Range<usize>) -> CsrMatrix {
        let (lo, hi) = (range.start, range.end);
        let mut row_starts = Vec::with_capacity(hi - lo + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_starts.push(0);
        for i in lo..hi {
            let (cols, vals) = self.row(i);
            let a = cols.partition_point(|&c| c < lo);
            let b = cols.partition_point(|&c| c < hi);
            col_indices.extend(cols[a..b].iter().map(|&c| c - lo));
            values.extend_from_slice(&vals[a..b]);
            row_starts.push(col_indices.len());
        }
        CsrMatrix::from_parts_unchecked(hi - lo, hi - lo, row_starts, col_indices, values)
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for (&c, &v) in self.col_indices.iter().zip(&self.values) {
            sums[c] += v.abs();
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// True when both matrices share the same sparsity pattern.
    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_starts == other.row_starts
            && self.col_indices == other.col_indices
    }
}

impl PartialEq for CsrMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.same_pattern(other) && self.values == other.values
    }
}

/// `inverse[perm[i]] = i`, failing unless `perm` is a bijection on `0..n`.
pub fn invert_permutation(perm: &[usize], n: usize) -> Result<Vec<usize>> {
    if perm.len() != n {
        return Err(Error::InvalidPermutation(n));
    }
    let mut inverse = vec![usize::MAX; n];
    for (i, &p) in perm.iter().enumerate() {
        if p >= n || inverse[p] != usize::MAX {
            return Err(Error::InvalidPermutation(n));
        }
        inverse[p] = i;
    }
    Ok(inverse)
}

/// Vector norm accumulated in binary64 whatever the storage precision.
pub fn vector_norm<T: Scalar>(x: &[T], which: NormKind) -> f64 {
    match which {
        NormKind::One => x.iter().map(|v| v.widen().abs()).sum(),
        NormKind::Two => x.iter().map(|v| v.widen() * v.widen()).sum::<f64>().sqrt(),
        NormKind::Inf => x.iter().map(|v| v.widen().abs()).fold(0.0, f64::max),
    }
}

pub fn norm2<T: Scalar>(x: &[T]) -> f64 {
    vector_norm(x, NormKind::Two)
}

/// Matrix infinity norm (maximum absolute row sum).
pub fn matrix_inf_norm(a: &CsrMatrix) -> f64 {
    a.inf_norm()
}
