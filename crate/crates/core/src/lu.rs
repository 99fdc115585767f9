//! Sparse LU kernels: left-looking Gilbert-Peierls factorization with
//! partial pivoting and small-pivot regularization, and zero-fill ILU(0).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::precision::Scalar;
use crate::sparse::CsrMatrix;

/// Default relative pivot threshold.
pub const DEFAULT_EPS_PIVOT: f64 = 1e-10;

const UNSET: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Exact,
    Ilu0,
}

/// A pivot that was replaced during factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationRecord {
    /// Elimination step (row and column of `U` in the pivoted frame).
    pub pivot_index: usize,
    pub original_value: f64,
    pub replaced_value: f64,
}

/// `P A = L U`, possibly with regularized pivots (then `P A + E = L U` with
/// `E` diagonal in the pivoted frame, one entry per perturbation record).
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lower: CsrMatrix,
    upper: CsrMatrix,
    row_perm: Vec<usize>,
    perturbations: Vec<PerturbationRecord>,
    kind: FactorKind,
}

/// Applies the small-pivot rule.
///
/// The pivot is kept when `|pivot| / block_inf_norm >= eps_pivot` (or, for a
/// zero norm, when the pivot is nonzero). Otherwise it becomes
/// `sign(pivot) * eps_pivot * block_inf_norm`, with `sign(0) = +1`.
pub fn regularize_pivot(pivot: f64, block_inf_norm: f64, eps_pivot: f64) -> (f64, bool) {
    let keep = if block_inf_norm == 0.0 {
        pivot != 0.0
    } else {
        pivot.abs() / block_inf_norm >= eps_pivot
    };
    if keep {
        (pivot, false)
    } else {
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        (sign * eps_pivot * block_inf_norm, true)
    }
}

/// Left-looking sparse LU of a square block.
///
/// Column `k` is obtained from a sparse triangular solve with the columns of
/// `L` found so far, restricted to the rows reachable from the nonzeros of
/// `A(:, k)`. The pivot is the largest-magnitude entry among rows not yet
/// pivoted (ties to the smallest row), then passed through
/// [`regularize_pivot`] against the block's infinity norm.
pub fn gp_lu(block: &CsrMatrix, eps_pivot: f64) -> Result<LuFactors> {
    if !block.is_square() {
        return Err(Error::NotSquare {
            nrows: block.nrows(),
            ncols: block.ncols(),
        });
    }
    if eps_pivot.is_nan() || eps_pivot < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "eps_pivot must be >= 0, got {eps_pivot}"
        )));
    }
    let n = block.nrows();
    let norm = block.inf_norm();
    let csc = block.transpose();

    // L columns hold original row indices until the end.
    let mut l_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut u_cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut pinv = vec![UNSET; n];
    let mut perturbations = Vec::new();

    let mut x = vec![0.0f64; n];
    let mut visited = vec![UNSET; n];
    let mut reach: Vec<usize> = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut first_free = 0usize;

    for k in 0..n {
        let (a_rows, a_vals) = csc.row(k);

        // Reach of A(:, k) in the graph of L, in reverse post-order.
        reach.clear();
        for &start in a_rows {
            if visited[start] == k {
                continue;
            }
            visited[start] = k;
            stack.push((start, 0));
            while let Some(top) = stack.last_mut() {
                let row = top.0;
                let step = pinv[row];
                let next = if step == UNSET {
                    None
                } else {
                    l_cols[step].get(top.1).map(|e| e.0)
                };
                match next {
                    Some(child) => {
                        top.1 += 1;
                        if visited[child] != k {
                            visited[child] = k;
                            stack.push((child, 0));
                        }
                    }
                    None => {
                        reach.push(row);
                        stack.pop();
                    }
                }
            }
        }
        reach.reverse();

        for (&r, &v) in a_rows.iter().zip(a_vals) {
            x[r] = v;
        }
        for &row in &reach {
            let step = pinv[row];
            if step == UNSET {
                continue;
            }
            let xj = x[row];
            for &(r, l) in &l_cols[step] {
                x[r] -= l * xj;
            }
        }

        let mut u_col = Vec::new();
        let mut pivot_row = UNSET;
        let mut pivot_abs = -1.0f64;
        for &row in &reach {
            match pinv[row] {
                UNSET => {
                    let a = x[row].abs();
                    if a > pivot_abs || (a == pivot_abs && row < pivot_row) {
                        pivot_abs = a;
                        pivot_row = row;
                    }
                }
                step => u_col.push((step, x[row])),
            }
        }
        let pivot = if pivot_row == UNSET {
            while pinv[first_free] != UNSET {
                first_free += 1;
            }
            pivot_row = first_free;
            0.0
        } else {
            x[pivot_row]
        };

        let (value, perturbed) = regularize_pivot(pivot, norm, eps_pivot);
        if value == 0.0 || !value.is_finite() {
            return Err(Error::SingularBlock { column: k });
        }
        if perturbed {
            perturbations.push(PerturbationRecord {
                pivot_index: k,
                original_value: pivot,
                replaced_value: value,
            });
        }
        pinv[pivot_row] = k;
        u_col.push((k, value));

        let mut l_col = Vec::new();
        for &row in &reach {
            if pinv[row] == UNSET {
                l_col.push((row, x[row] / value));
            }
            x[row] = 0.0;
        }
        u_cols.push(u_col);
        l_cols.push(l_col);
    }

    let mut l_trip = Vec::new();
    for (k, col) in l_cols.iter().enumerate() {
        l_trip.push((k, k, 1.0));
        for &(r, v) in col {
            l_trip.push((pinv[r], k, v));
        }
    }
    let mut u_trip = Vec::new();
    for (k, col) in u_cols.iter().enumerate() {
        for &(r, v) in col {
            u_trip.push((r, k, v));
        }
    }
    let mut row_perm = vec![0usize; n];
    for (row, &step) in pinv.iter().enumerate() {
        row_perm[step] = row;
    }
    Ok(LuFactors {
        n,
        lower: CsrMatrix::from_triplets(n, n, &l_trip)?,
        upper: CsrMatrix::from_triplets(n, n, &u_trip)?,
        row_perm,
        perturbations,
        kind: FactorKind::Exact,
    })
}

/// Zero-fill incomplete LU in row-wise i-k-j order.
///
/// Updates are applied only at positions already present in `a`; there is no
/// pivoting and no regularization, so a zero diagonal is an error.
pub fn ilu0(a: &CsrMatrix) -> Result<LuFactors> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    let n = a.nrows();
    let rs = a.row_starts();
    let cols = a.col_indices();
    let mut vals = a.values().to_vec();

    let mut diag = vec![0usize; n];
    for (i, d) in diag.iter_mut().enumerate() {
        *d = rs[i]
            + a.row(i)
                .0
                .binary_search(&i)
                .map_err(|_| Error::ZeroPivot { row: i })?;
    }

    let mut pos = vec![UNSET; n];
    for i in 0..n {
        for p in rs[i]..rs[i + 1] {
            pos[cols[p]] = p;
        }
        for p in rs[i]..diag[i] {
            let k = cols[p];
            let lik = vals[p] / vals[diag[k]];
            vals[p] = lik;
            for q in diag[k] + 1..rs[k + 1] {
                let slot = pos[cols[q]];
                if slot != UNSET {
                    vals[slot] -= lik * vals[q];
                }
            }
        }
        for p in rs[i]..rs[i + 1] {
            pos[cols[p]] = UNSET;
        }
        if vals[diag[i]] == 0.0 {
            return Err(Error::ZeroPivot { row: i });
        }
    }

    let mut l_rs = vec![0usize];
    let mut l_cols = Vec::new();
    let mut l_vals = Vec::new();
    let mut u_rs = vec![0usize];
    let mut u_cols = Vec::new();
    let mut u_vals = Vec::new();
    for i in 0..n {
        for p in rs[i]..diag[i] {
            l_cols.push(cols[p]);
            l_vals.push(vals[p]);
        }
        l_cols.push(i);
        l_vals.push(1.0);
        l_rs.push(l_cols.len());
        for p in diag[i]..rs[i + 1] {
            u_cols.push(cols[p]);
            u_vals.push(vals[p]);
        }
        u_rs.push(u_cols.len());
    }
    Ok(LuFactors {
        n,
        lower: CsrMatrix::from_parts_unchecked(n, n, l_rs, l_cols, l_vals),
        upper: CsrMatrix::from_parts_unchecked(n, n, u_rs, u_cols, u_vals),
        row_perm: (0..n).collect(),
        perturbations: Vec::new(),
        kind: FactorKind::Ilu0,
    })
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Unit lower-triangular factor (diagonal stored explicitly).
    pub fn lower(&self) -> &CsrMatrix {
        &self.lower
    }

    pub fn upper(&self) -> &CsrMatrix {
        &self.upper
    }

    /// Row `k` of `P A` is row `row_perm()[k]` of `A`.
    pub fn row_perm(&self) -> &[usize] {
        &self.row_perm
    }

    pub fn perturbations(&self) -> &[PerturbationRecord] {
        &self.perturbations
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.lower.nnz() + self.upper.nnz()
    }

    /// Rounds both factors to binary32 for single-precision solves.
    pub fn materialize_low(&self) {
        self.lower.materialize_low();
        self.upper.materialize_low();
    }

    pub fn has_low(&self) -> bool {
        self.lower.has_low() && self.upper.has_low()
    }

    /// The perturbation `E` with `P A + E = L U`, in the pivoted frame.
    pub fn perturbation_matrix(&self) -> CsrMatrix {
        let trip: Vec<_> = self
            .perturbations
            .iter()
            .map(|r| {
                (
                    r.pivot_index,
                    r.pivot_index,
                    r.replaced_value - r.original_value,
                )
            })
            .collect();
        CsrMatrix::from_triplets(self.n, self.n, &trip).expect("pivot indices are in range")
    }

    /// Solves `A x = b` (or the perturbed / incomplete system the factors
    /// represent) in the precision of `T`.
    pub fn solve<T: Scalar>(&self, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: rhs.len(),
            });
        }
        let mut x: Vec<T> = self.row_perm.iter().map(|&r| rhs[r]).collect();
        self.solve_permuted_in_place(&mut x);
        Ok(x)
    }

    // Forward and back substitution on an already row-permuted right-hand side.
    pub(crate) fn solve_permuted_in_place<T: Scalar>(&self, x: &mut [T]) {
        let lv = T::matrix_values(&self.lower);
        let lrs = self.lower.row_starts();
        let lc = self.lower.col_indices();
        for i in 0..self.n {
            let mut acc = x[i];
            // the last entry of each L row is the unit diagonal
            for p in lrs[i]..lrs[i + 1] - 1 {
                acc -= lv[p] * x[lc[p]];
            }
            x[i] = acc;
        }
        let uv = T::matrix_values(&self.upper);
        let urs = self.upper.row_starts();
        let uc = self.upper.col_indices();
        for i in (0..self.n).rev() {
            let d = urs[i];
            let mut acc = x[i];
            for p in d + 1..urs[i + 1] {
                acc -= uv[p] * x[uc[p]];
            }
            x[i] = acc / uv[d];
        }
    }

    /// Solves `A^T x = b` in binary64.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: rhs.len(),
            });
        }
        let mut w = rhs.to_vec();
        let uv = self.upper.values();
        let urs = self.upper.row_starts();
        let uc = self.upper.col_indices();
        for i in 0..self.n {
            let d = urs[i];
            w[i] /= uv[d];
            let wi = w[i];
            for p in d + 1..urs[i + 1] {
                w[uc[p]] -= uv[p] * wi;
            }
        }
        let lv = self.lower.values();
        let lrs = self.lower.row_starts();
        let lc = self.lower.col_indices();
        for i in (0..self.n).rev() {
            let wi = w[i];
            for p in lrs[i]..lrs[i + 1] - 1 {
                w[lc[p]] -= lv[p] * wi;
            }
        }
        let mut x = vec![0.0; self.n];
        for (k, &r) in self.row_perm.iter().enumerate() {
            x[r] = w[k];
        }
        Ok(x)
    }

    /// Maximum absolute column sum of `L U`, i.e. of the (perturbed) matrix
    /// the factors represent.
    pub fn product_one_norm(&self) -> f64 {
        let n = self.n;
        let mut col_sums = vec![0.0f64; n];
        let mut acc = vec![0.0f64; n];
        let mut touched = vec![false; n];
        let mut list = Vec::new();
        for i in 0..n {
            let (lc, lv) = self.lower.row(i);
            for (&k, &l) in lc.iter().zip(lv) {
                let (uc, uv) = self.upper.row(k);
                for (&j, &u) in uc.iter().zip(uv) {
                    if !touched[j] {
                        touched[j] = true;
                        list.push(j);
                    }
                    acc[j] += l * u;
                }
            }
            for &j in &list {
                col_sums[j] += acc[j].abs();
                acc[j] = 0.0;
                touched[j] = false;
            }
            list.clear();
        }
        col_sums.into_iter().fold(0.0, f64::max)
    }
}

/// Solves with `factors` in the requested precision.
pub fn lu_solve<T: Scalar>(factors: &LuFactors, rhs: &[T]) -> Result<Vec<T>> {
    factors.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn regularize_rule() {
        assert_eq!(regularize_pivot(2.0, 1.0, 1e-10), (2.0, false));
        assert_eq!(regularize_pivot(-1e-15, 1.0, 1e-10), (-1e-10, true));
        let (v, p) = regularize_pivot(0.0, 3.0, 1e-10);
        assert!(p);
        assert_eq!(v, 1e-10 * 3.0);
        assert_eq!(regularize_pivot(0.5, 0.0, 1e-10), (0.5, false));
        assert_eq!(regularize_pivot(-0.0, 2.0, 1e-10).0, 2e-10);
    }

    #[test]
    fn scalar_block() {
        let f = gp_lu(&CsrMatrix::from_dense(&[vec![5.0]]), 1e-10).unwrap();
        assert_eq!(f.lower().to_dense(), vec![vec![1.0]]);
        assert_eq!(f.upper().to_dense(), vec![vec![5.0]]);
        assert!(f.perturbations().is_empty());
    }

    #[test]
    fn tridiagonal_has_no_fill() {
        let f = gp_lu(&tridiag(3), 1e-10).unwrap();
        let u = f.upper().to_dense();
        let l = f.lower().to_dense();
        assert_eq!(f.row_perm(), &[0, 1, 2]);
        assert!((u[0][0] - 2.0).abs() < 1e-15);
        assert!((u[1][1] - 1.5).abs() < 1e-15);
        assert!((u[2][2] - 4.0 / 3.0).abs() < 1e-15);
        assert!((l[1][0] + 0.5).abs() < 1e-15);
        assert!((l[2][1] + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f.nnz(), 3 + 2 + 3 + 2);
    }

    #[test]
    fn tiny_pivot_recorded() {
        let block = CsrMatrix::from_dense(&[vec![1e-20, 0.0], vec![0.0, 1.0]]);
        let f = gp_lu(&block, 1e-10).unwrap();
        assert_eq!(
            f.perturbations(),
            &[PerturbationRecord {
                pivot_index: 0,
                original_value: 1e-20,
                replaced_value: 1e-10,
            }]
        );
    }

    #[test]
    fn zero_column_without_regularization_is_singular() {
        let block = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert!(matches!(
            gp_lu(&block, 0.0),
            Err(Error::SingularBlock { column: 1 })
        ));
        let f = gp_lu(&block, 1e-10).unwrap();
        assert_eq!(f.perturbations().len(), 1);
        assert_eq!(f.perturbations()[0].pivot_index, 1);
    }

    #[test]
    fn partial_pivoting_picks_largest() {
        let block = CsrMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let f = gp_lu(&block, 0.0).unwrap();
        assert_eq!(f.row_perm(), &[1, 0]);
        let x: Vec<f64> = f.solve(&[5.0, 11.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ties_go_to_smallest_row() {
        let block = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![-2.0, 3.0]]);
        let f = gp_lu(&block, 0.0).unwrap();
        assert_eq!(f.row_perm(), &[0, 1]);
    }

    #[test]
    fn identity_and_upper_solves() {
        let f = gp_lu(&CsrMatrix::identity(3), 1e-10).unwrap();
        assert_eq!(f.solve(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        let f = gp_lu(
            &CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![0.0, 4.0]]),
            1e-10,
        )
        .unwrap();
        assert_eq!(f.solve(&[5.0, 8.0]).unwrap(), vec![1.5, 2.0]);
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn transpose_solve() {
        let a = CsrMatrix::from_dense(&[
            vec![1.0, 2.0, 0.0],
            vec![3.0, 4.0, 1.0],
            vec![0.0, 1.0, 5.0],
        ]);
        let f = gp_lu(&a, 0.0).unwrap();
        let x = f.solve_transpose(&[1.0, 2.0, 3.0]).unwrap();
        let check = a.transpose().spmv(&x).unwrap();
        for (c, e) in check.iter().zip([1.0, 2.0, 3.0]) {
            assert!((c - e).abs() < 1e-13);
        }
    }

    #[test]
    fn ilu0_of_diagonal_is_exact() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 5.0]]);
        let f = ilu0(&a).unwrap();
        assert_eq!(f.lower(), &CsrMatrix::identity(2));
        assert_eq!(f.upper(), &a);
        assert_eq!(f.kind(), FactorKind::Ilu0);
    }

    #[test]
    fn ilu0_matches_gp_on_tridiagonal() {
        let a = tridiag(3);
        let i = ilu0(&a).unwrap();
        let g = gp_lu(&a, 1e-10).unwrap();
        assert!(i.lower().same_pattern(g.lower()));
        assert!(i.upper().same_pattern(g.upper()));
        for (x, y) in i.lower().values().iter().zip(g.lower().values()) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in i.upper().values().iter().zip(g.upper().values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn ilu0_zero_diagonal_errors() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(ilu0(&a), Err(Error::ZeroPivot { row: 0 })));
        let a =
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)])
                .unwrap();
        assert!(matches!(ilu0(&a), Err(Error::ZeroPivot { row: 1 })));
    }

    #[test]
    fn product_norm_of_factors() {
        let a = CsrMatrix::from_dense(&[vec![1.0, -2.0], vec![3.0, 4.0]]);
        let f = gp_lu(&a, 0.0).unwrap();
        assert!((f.product_one_norm() - a.one_norm()).abs() < 1e-14);
    }

    #[test]
    fn low_precision_solve() {
        let f = gp_lu(&tridiag(4), 1e-10).unwrap();
        let x32 = f.solve(&[1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let x64 = f.solve(&[1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!(f.has_low());
        for (a, b) in x32.iter().zip(&x64) {
            assert!(((*a as f64) - b).abs() < 1e-6);
        }
    }
}
