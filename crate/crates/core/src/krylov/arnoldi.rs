use crate::error::{Error, Result};
use crate::precision::Scalar;

/// Orthonormal Krylov basis and Hessenberg matrix built one column at a time.
///
/// Basis vectors live in the working precision `T`; Hessenberg entries are
/// kept in binary64 because they feed the least-squares solve.
#[derive(Debug, Clone)]
pub struct ArnoldiState<T: Scalar> {
    max_steps: usize,
    basis: Vec<Vec<T>>,
    // column j holds h_{0..=j+1, j}
    columns: Vec<Vec<f64>>,
    breakdown: bool,
}

impl<T: Scalar> ArnoldiState<T> {
    /// Starts from `v1`, which is normalized here (in binary64) before storage.
    pub fn new(v1: &[f64], max_steps: usize) -> Result<Self> {
        let norm = v1.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ArnoldiState(
                "starting vector must be nonzero and finite",
            ));
        }
        let v: Vec<T> = v1.iter().map(|&x| T::narrow(x / norm)).collect();
        Ok(Self {
            max_steps,
            basis: vec![v],
            columns: Vec::with_capacity(max_steps),
            breakdown: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis[0].len()
    }

    /// Number of completed Arnoldi steps.
    pub fn steps(&self) -> usize {
        self.columns.len()
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn breakdown(&self) -> bool {
        self.breakdown
    }

    pub fn basis(&self) -> &[Vec<T>] {
        &self.basis
    }

    /// Column `j` of the extended Hessenberg matrix (length `j + 2`).
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    /// The `(j+1) x j` extended Hessenberg matrix as dense rows.
    pub fn hessenberg_extended(&self) -> Vec<Vec<f64>> {
        let j = self.steps();
        let mut h = vec![vec![0.0; j]; j + 1];
        for (c, col) in self.columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                h[r][c] = v;
            }
        }
        h
    }

    /// The leading square `j x j` Hessenberg block.
    pub fn hessenberg_square(&self) -> Vec<Vec<f64>> {
        let mut h = self.hessenberg_extended();
        h.pop();
        h
    }
}

/// One Arnoldi step with modified Gram-Schmidt.
///
/// `op` applies the (preconditioned) operator in precision `T`. Inner
/// products accumulate in binary64; subtractions happen in `T`. Breakdown
/// is declared when the new direction is below `100 u_T` relative to the
/// norm of `op(v_j)`; the column is still recorded but no new basis vector
/// is added.
pub fn arnoldi_step<T, F>(mut op: F, state: &mut ArnoldiState<T>) -> Result<()>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<Vec<T>>,
{
    if state.breakdown {
        return Err(Error::ArnoldiState("basis has broken down"));
    }
    let j = state.steps();
    if j >= state.max_steps {
        return Err(Error::ArnoldiState("basis is full"));
    }
    let mut w = op(&state.basis[j])?;
    if w.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: w.len(),
        });
    }
    let w_norm0 = w.iter().map(|x| x.widen().powi(2)).sum::<f64>().sqrt();
    let mut col = Vec::with_capacity(j + 2);
    for v in &state.basis {
        let h: f64 = v.iter().zip(&w).map(|(a, b)| a.widen() * b.widen()).sum();
        let ht = T::narrow(h);
        for (wi, &vi) in w.iter_mut().zip(v) {
            *wi -= ht * vi;
        }
        col.push(h);
    }
    let h_next = w.iter().map(|x| x.widen().powi(2)).sum::<f64>().sqrt();
    if !h_next.is_finite() {
        return Err(Error::ArnoldiState("non-finite value in Arnoldi vector"));
    }
    col.push(h_next);
    state.columns.push(col);
    if h_next <= 100.0 * <T as Scalar>::UNIT_ROUNDOFF * w_norm0 {
        state.breakdown = true;
    } else {
        let inv = 1.0 / h_next;
        state
            .basis
            .push(w.iter().map(|&x| T::narrow(x.widen() * inv)).collect());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    #[test]
    fn identity_breaks_down_after_one_step() {
        let a = CsrMatrix::identity(3);
        let mut st = ArnoldiState::<f64>::new(&[1.0, 0.0, 0.0], 3).unwrap();
        arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).unwrap();
        assert_eq!(st.column(0), &[1.0, 0.0]);
        assert!(st.breakdown());
        assert!(arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).is_err());
    }

    #[test]
    fn two_by_two_example() {
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let mut st = ArnoldiState::<f64>::new(&[1.0, 0.0], 2).unwrap();
        arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).unwrap();
        assert_eq!(st.column(0), &[2.0, 1.0]);
        assert_eq!(st.basis()[1], vec![0.0, 1.0]);
        arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).unwrap();
        assert_eq!(st.hessenberg_square(), vec![vec![2.0, 1.0], vec![1.0, 3.0]]);
        assert!(st.breakdown());
    }

    #[test]
    fn rejects_zero_start_and_full_basis() {
        assert!(ArnoldiState::<f64>::new(&[0.0, 0.0], 2).is_err());
        let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let mut st = ArnoldiState::<f32>::new(&[1.0, 1.0], 1).unwrap();
        arnoldi_step(|v: &[f32]| a.spmv(v), &mut st).unwrap();
        assert!(matches!(
            arnoldi_step(|v: &[f32]| a.spmv(v), &mut st),
            Err(Error::ArnoldiState(_))
        ));
    }
}
