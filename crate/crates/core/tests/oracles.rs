//! Comparisons against dense nalgebra reference computations.

use approx::assert_relative_eq;
use hpbj::fixtures::{
    laplacian_2d, random_diagonally_dominant, random_vector, small_example, tridiagonal,
};
use hpbj::graph::DEFAULT_IMBALANCE_TOL;
use hpbj::krylov::{arnoldi_step, ritz_values, solve_hessenberg_ls, ArnoldiState};
use hpbj::precond::{cond_estimate_block, exact_inverse_one_norm, hager_inverse_one_norm};
use hpbj::sparse::norm2;
use hpbj::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a.get(i, j).unwrap_or(0.0))
}

fn random_dense(n: usize, rng: &mut ChaCha8Rng, density: f64) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || rng.gen_bool(density) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[test]
fn spmv_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let a = random_dense(20, &mut rng, 0.5);
        let x = random_vector(20, rng.gen());
        let y = a.spmv(&x).unwrap();
        let reference = dense(&a) * DVector::from_vec(x.clone());
        let scale = (dense(&a).abs() * DVector::from_vec(x).abs()).max();
        for (u, v) in y.iter().zip(reference.iter()) {
            assert!((u - v).abs() <= 1e-14 * scale.max(1e-300));
        }
    }
}

#[test]
fn lu_reconstructs_permuted_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let a = random_dense(10, &mut rng, 1.0);
        let ad = dense(&a);
        if ad.clone().svd(false, false).singular_values.min() < 1e-3 {
            continue;
        }
        let f = gp_lu(&a, 0.0).unwrap();
        assert!(f.perturbations().is_empty());
        let pa = DMatrix::from_fn(10, 10, |k, j| ad[(f.row_perm()[k], j)]);
        let lu = dense(f.lower()) * dense(f.upper());
        assert!((pa - lu).norm() <= 1e-13 * ad.norm());
    }
}

#[test]
fn lu_solve_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tested = 0;
    while tested < 50 {
        let a = random_dense(10, &mut rng, 0.6);
        let ad = dense(&a);
        if ad.clone().svd(false, false).singular_values.min() < 1e-2 {
            continue;
        }
        let b = random_vector(10, rng.gen());
        let x = lu_solve(&gp_lu(&a, 0.0).unwrap(), &b).unwrap();
        let reference = ad.lu().solve(&DVector::from_vec(b)).unwrap();
        let err = (DVector::from_vec(x) - &reference).norm();
        assert!(err <= 1e-12 * reference.norm(), "error {err}");
        tested += 1;
    }
}

#[test]
fn ilu0_equals_exact_lu_without_fill() {
    let a = tridiagonal(12, -1.0, 4.0, -2.0);
    let f = ilu0(&a).unwrap();
    let lu = dense(f.lower()) * dense(f.upper());
    assert!((lu - dense(&a)).norm() <= 1e-14 * dense(&a).norm());
}

#[test]
fn small_example_block_inverses() {
    let a = small_example();
    let g = graph_from_matrix(&a).unwrap();
    let part = partition_graph(&g, 2, DEFAULT_IMBALANCE_TOL).unwrap();
    let p = build_block_jacobi(&a, &part, BlockJacobiOptions::default()).unwrap();
    let ad = dense(&a);
    let m1 = ad.view((0, 0), (2, 2)).into_owned().try_inverse().unwrap();
    let m2 = ad.view((2, 2), (2, 2)).into_owned().try_inverse().unwrap();
    for j in 0..4 {
        let mut e = vec![0.0; 4];
        e[j] = 1.0;
        let col = p.apply(&e).unwrap();
        for i in 0..4 {
            let want = match (i < 2, j < 2) {
                (true, true) => m1[(i, j)],
                (false, false) => m2[(i - 2, j - 2)],
                _ => 0.0,
            };
            assert_relative_eq!(col[i], want, epsilon = 1e-15, max_relative = 1e-14);
        }
    }
}

#[test]
fn single_block_preconditioner_solves_small_example_in_one_step() {
    let a = small_example();
    let x_ref = dense(&a)
        .lu()
        .solve(&DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]))
        .unwrap();
    let b: Vec<f64> = (dense(&a) * &x_ref).iter().copied().collect();
    let part = Partition::from_assignment(vec![0; 4], 1).unwrap();
    let p = build_block_jacobi(&a, &part, BlockJacobiOptions::default()).unwrap();
    let cfg = GmresConfig {
        tol: 1e-12,
        ..Default::default()
    };
    let (x, rep) = hybrid_restart_gmres(&a, &p, &b, &cfg).unwrap();
    assert_eq!(rep.total_iterations, 1);
    for (u, v) in x.iter().zip(x_ref.iter()) {
        assert_relative_eq!(*u, *v, max_relative = 1e-12);
    }
}

#[test]
fn givens_estimate_equals_true_residual() {
    for seed in 0..5u64 {
        let n = 30 + 10 * seed as usize;
        let a = random_diagonally_dominant(n, 4, 1.1, seed);
        let b = random_vector(n, 50 + seed);
        let mut st = ArnoldiState::<f64>::new(&b, n).unwrap();
        let beta = norm2(&b);
        let ad = dense(&a);
        for j in 1..=n.min(25) {
            arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).unwrap();
            let (y, est) = solve_hessenberg_ls(&st.hessenberg_extended(), beta);
            let mut x = vec![0.0; n];
            for (v, yi) in st.basis().iter().zip(&y) {
                for (xk, vk) in x.iter_mut().zip(v) {
                    *xk += yi * vk;
                }
            }
            let r = DVector::from_vec(b.clone()) - &ad * DVector::from_vec(x);
            let truth = r.norm();
            assert!(
                (est - truth).abs() <= 1e-10 * truth.max(1e-14 * beta),
                "step {j}: {est} vs {truth}"
            );
            if st.breakdown() {
                break;
            }
        }
    }
}

#[test]
fn ritz_values_match_dense_eigenvalues() {
    let a = laplacian_2d(8);
    let mut st = ArnoldiState::<f64>::new(&random_vector(64, 4), 15).unwrap();
    for _ in 0..15 {
        arnoldi_step(|v: &[f64]| a.spmv(v), &mut st).unwrap();
    }
    let h = st.hessenberg_square();
    let ritz = ritz_values(&h).unwrap();
    let mut reference: Vec<_> = DMatrix::from_fn(15, 15, |i, j| h[i][j])
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    reference.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    for (u, v) in ritz.iter().zip(&reference) {
        assert!((u - v).norm() <= 1e-10 * v.norm().max(1.0), "{u} vs {v}");
        assert!(u.re > 0.0 && u.re < 8.0);
    }

    // nonsymmetric Hessenberg with complex pairs
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let m = rng.gen_range(2..12);
        let h: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        if i <= j + 1 {
                            rng.gen_range(-2.0..2.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let ritz = ritz_values(&h).unwrap();
        let mut reference: Vec<_> = DMatrix::from_fn(m, m, |i, j| h[i][j])
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect();
        reference.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        for (u, v) in ritz.iter().zip(&reference) {
            assert!((u - v).norm() <= 1e-8 * v.norm().max(1.0), "{u} vs {v}");
        }
    }
}

#[test]
fn condition_estimates_against_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [8usize, 40, 100, 150] {
        let a = random_dense(n, &mut rng, 0.2);
        let f = gp_lu(&a, 0.0).unwrap();
        let ad = dense(&a);
        let exact = one_norm(&ad.clone().try_inverse().unwrap());
        assert_relative_eq!(exact_inverse_one_norm(&f), exact, max_relative = 1e-8);
        let est = hager_inverse_one_norm(&f);
        assert!(
            est <= exact * (1.0 + 1e-10) && est >= exact / 10.0,
            "n={n}: {est} vs {exact}"
        );
        let cond = cond_estimate_block(&f);
        assert!(cond <= one_norm(&ad) * exact * (1.0 + 1e-10));
    }
}

#[test]
fn neumann_series_matches_dense_sum() {
    let a = laplacian_2d(6);
    let g = graph_from_matrix(&a).unwrap();
    let part = partition_graph(&g, 4, DEFAULT_IMBALANCE_TOL).unwrap();
    let opts = BlockJacobiOptions {
        neumann_order: 3,
        ..Default::default()
    };
    let p = build_block_jacobi(&a, &part, opts).unwrap();
    let m = p.as_block_jacobi().unwrap().assemble(&a).unwrap();
    let phi_inv = dense(&m).try_inverse().unwrap();
    let ad = dense(&a);
    let iter = DMatrix::identity(36, 36) - &phi_inv * &ad;
    let v = DVector::from_vec(random_vector(36, 1));
    for k in 0..=3 {
        let mut term = &phi_inv * &v;
        let mut sum = term.clone();
        for _ in 0..k {
            term = &iter * term;
            sum += &term;
        }
        let got = apply_neumann(&p, &a, v.as_slice(), k).unwrap();
        let err = (DVector::from_vec(got) - &sum).norm();
        assert!(err <= 1e-12 * sum.norm(), "order {k}: {err}");
    }
    let applied = p.apply(v.as_slice()).unwrap();
    let full = apply_neumann(&p, &a, v.as_slice(), 3).unwrap();
    for (u, w) in applied.iter().zip(&full) {
        assert_relative_eq!(*u, *w, max_relative = 1e-13, epsilon = 1e-15);
    }
}
