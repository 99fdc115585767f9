//! Deterministic test matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sparse::CsrMatrix;

/// Five-point Laplacian on an `nx x nx` grid with Dirichlet boundary
/// (4 on the diagonal, -1 per neighbour), natural ordering.
pub fn laplacian_2d(nx: usize) -> CsrMatrix {
    convection_diffusion_2d(nx, 0.0)
}

/// Central-difference convection-diffusion on an `nx x nx` grid.
///
/// `wind` is the cell Peclet-like skew applied to both directions: the
/// west/south couplings become `-1 - wind` and east/north `-1 + wind`.
/// With `wind = 0` this is the Laplacian.
pub fn convection_diffusion_2d(nx: usize, wind: f64) -> CsrMatrix {
    let n = nx * nx;
    let mut t = Vec::with_capacity(5 * n);
    for gy in 0..nx {
        for gx in 0..nx {
            let i = gy * nx + gx;
            if gy > 0 {
                t.push((i, i - nx, -1.0 - wind));
            }
            if gx > 0 {
                t.push((i, i - 1, -1.0 - wind));
            }
            t.push((i, i, 4.0));
            if gx + 1 < nx {
                t.push((i, i + 1, -1.0 + wind));
            }
            if gy + 1 < nx {
                t.push((i, i + nx, -1.0 + wind));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Tridiagonal Toeplitz matrix `(lower, diag, upper)`.
pub fn tridiagonal(n: usize, lower: f64, diag: f64, upper: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            t.push((i, i - 1, lower));
        }
        t.push((i, i, diag));
        if i + 1 < n {
            t.push((i, i + 1, upper));
        }
    }
    CsrMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Small nonsymmetric tridiagonal example whose graph is the path 0-1-2-3.
pub fn small_example() -> CsrMatrix {
    CsrMatrix::from_dense(&[
        vec![4.0, 1.0, 0.0, 0.0],
        vec![1.0, 5.0, 1.0, 0.0],
        vec![0.0, 1.0, 6.0, 2.0],
        vec![0.0, 0.0, 1.0, 3.0],
    ])
}

/// Random sparse matrix with about `per_row` off-diagonal entries in
/// `[-1, 1]` per row and a diagonal of `row_sum * dominance`, so it is
/// strictly diagonally dominant whenever `dominance > 1`.
pub fn random_diagonally_dominant(
    n: usize,
    per_row: usize,
    dominance: f64,
    seed: u64,
) -> CsrMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(n * (per_row + 1));
    for i in 0..n {
        let mut row_sum = 0.0;
        if n > 1 {
            for _ in 0..per_row {
                let j = rng.gen_range(0..n);
                if j == i {
                    continue;
                }
                let v: f64 = rng.gen_range(-1.0..1.0);
                row_sum += v.abs();
                t.push((i, j, v));
            }
        }
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        t.push((i, i, sign * (row_sum * dominance + 1.0)));
    }
    CsrMatrix::from_triplets(n, n, &t).expect("indices in range")
}

/// Uniform vector in `[-1, 1]` from a seed.
pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_shape() {
        let a = laplacian_2d(3);
        assert_eq!(a.nrows(), 9);
        assert_eq!(a.nnz(), 9 + 2 * 12);
        assert_eq!(a.get(4, 4), Some(4.0));
        assert_eq!(a.get(4, 1), Some(-1.0));
    }

    #[test]
    fn convection_is_nonsymmetric() {
        let a = convection_diffusion_2d(4, 0.5);
        assert_eq!(a.get(1, 0), Some(-1.5));
        assert_eq!(a.get(0, 1), Some(-0.5));
    }

    #[test]
    fn random_is_reproducible_and_dominant() {
        let a = random_diagonally_dominant(50, 4, 2.0, 7);
        assert_eq!(a, random_diagonally_dominant(50, 4, 2.0, 7));
        for i in 0..50 {
            let (cols, vals) = a.row(i);
            let off: f64 = cols
                .iter()
                .zip(vals)
                .filter(|(&c, _)| c != i)
                .map(|(_, v)| v.abs())
                .sum();
            assert!(a.get(i, i).unwrap().abs() > off);
        }
    }
}
