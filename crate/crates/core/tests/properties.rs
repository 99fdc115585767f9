#![allow(clippy::needless_range_loop)]

use hpbj::fixtures::{laplacian_2d, random_diagonally_dominant, random_vector, small_example};
use hpbj::graph::DEFAULT_IMBALANCE_TOL;
use hpbj::krylov::{arnoldi_step, ArnoldiState};
use hpbj::sparse::invert_permutation;
use hpbj::*;
use proptest::prelude::*;

fn sparse_matrix(max_n: usize) -> impl Strategy<Value = CsrMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, -1.0e3f64..1.0e3), 0..4 * n)
            .prop_map(move |t| CsrMatrix::from_triplets(n, n, &t).unwrap())
    })
}

fn dominant_matrix() -> impl Strategy<Value = (CsrMatrix, u64)> {
    (4usize..60, 1usize..6, any::<u64>())
        .prop_map(|(n, per_row, seed)| (random_diagonally_dominant(n, per_row, 1.5, seed), seed))
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

fn assignment(n: usize, s: usize) -> impl Strategy<Value = Vec<usize>> {
    // First s nodes cover every block so none is empty; the rest are free.
    prop::collection::vec(0..s, n - s).prop_flat_map(move |tail| {
        let mut a: Vec<usize> = (0..s).collect();
        a.extend(tail);
        Just(a).prop_shuffle()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_market_round_trip_is_exact(a in sparse_matrix(30)) {
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = read_matrix_market(buf.as_slice()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn permutation_round_trip_is_exact((a, perm) in sparse_matrix(30).prop_flat_map(|a| {
        let n = a.nrows();
        (Just(a), permutation(n))
    })) {
        let inv = invert_permutation(&perm, perm.len()).unwrap();
        let back = a.permute_symmetric(&perm).unwrap().permute_symmetric(&inv).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn spmv_is_bitwise_repeatable(a in sparse_matrix(40), seed in any::<u64>()) {
        let x = random_vector(a.ncols(), seed);
        let y1 = a.spmv(&x).unwrap();
        let y2 = a.spmv(&x).unwrap();
        prop_assert_eq!(y1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn low_precision_values_are_rounded_copies(a in sparse_matrix(30)) {
        for (&hi, &lo) in a.values().iter().zip(a.values_low()) {
            prop_assert_eq!(lo, hi as f32);
        }
    }

    #[test]
    fn graph_is_symmetric_with_exact_weights(a in sparse_matrix(25)) {
        let g = graph_from_matrix(&a).unwrap();
        prop_assert!(g.is_symmetric());
        let n = a.nrows();
        for i in 0..n {
            for j in 0..n {
                let aij = a.get(i, j).unwrap_or(0.0);
                let aji = a.get(j, i).unwrap_or(0.0);
                let expect = (i != j && (aij != 0.0 || aji != 0.0)).then(|| (aij.abs() + aji.abs()) / 2.0);
                prop_assert_eq!(g.weight(i, j), expect, "edge ({}, {})", i, j);
            }
        }
    }

    #[test]
    fn partitions_cover_disjointly_and_deterministically(a in sparse_matrix(40), s_frac in 0.0f64..1.0) {
        let n = a.nrows();
        let s = 1 + ((n - 1) as f64 * s_frac) as usize;
        let g = graph_from_matrix(&a).unwrap();
        let p = partition_graph(&g, s, DEFAULT_IMBALANCE_TOL).unwrap();
        let again = partition_graph(&g, s, DEFAULT_IMBALANCE_TOL).unwrap();
        prop_assert_eq!(p.assignment(), again.assignment());
        prop_assert_eq!(p.len(), n);
        prop_assert!(p.assignment().iter().all(|&b| b < s));
        prop_assert!(p.block_sizes().iter().all(|&c| c > 0));
        prop_assert_eq!(p.block_sizes().iter().sum::<usize>(), n);
        // perm gathers block 0 first, then block 1, ... keeping original order
        let inv = invert_permutation(p.perm(), n).unwrap();
        let order: Vec<(usize, usize)> = inv.iter().map(|&old| (p.assignment()[old], old)).collect();
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(order, sorted);
    }

    #[test]
    fn ilu0_stays_in_pattern((a, _) in dominant_matrix()) {
        let f = ilu0(&a).unwrap();
        for factor in [f.lower(), f.upper()] {
            for i in 0..a.nrows() {
                for &j in factor.row(i).0 {
                    prop_assert!(i == j || a.get(i, j).is_some());
                }
            }
        }
    }

    #[test]
    fn factorization_is_deterministic((a, _) in dominant_matrix()) {
        let f = gp_lu(&a, 1e-10).unwrap();
        let g = gp_lu(&a, 1e-10).unwrap();
        prop_assert_eq!(f.row_perm(), g.row_perm());
        prop_assert_eq!(f.lower(), g.lower());
        prop_assert_eq!(f.upper(), g.upper());
    }

    #[test]
    fn block_jacobi_inverts_its_own_matrix(
        ((a, seed), asg) in dominant_matrix().prop_flat_map(|(a, seed)| {
            let n = a.nrows();
            (Just((a, seed)), (1..=n.min(8)).prop_flat_map(move |s| assignment(n, s)))
        })
    ) {
        let s = asg.iter().max().unwrap() + 1;
        let part = Partition::from_assignment(asg, s).unwrap();
        let p = build_block_jacobi(&a, &part, BlockJacobiOptions::default()).unwrap();
        let bj = p.as_block_jacobi().unwrap();
        prop_assume!(bj.factors().iter().all(|f| f.perturbations().is_empty()));
        let m = bj.assemble(&a).unwrap();
        let z = random_vector(a.nrows(), seed);
        let back = p.apply(&m.spmv(&z).unwrap()).unwrap();
        let err = back.iter().zip(&z).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * hpbj::sparse::norm2(&z), "error {}", err);
    }

    #[test]
    fn block_solves_are_independent(
        ((a, seed), asg) in dominant_matrix().prop_flat_map(|(a, seed)| {
            let n = a.nrows();
            (Just((a, seed)), (2..=n.min(6)).prop_flat_map(move |s| assignment(n, s)))
        })
    ) {
        let s = asg.iter().max().unwrap() + 1;
        let part = Partition::from_assignment(asg, s).unwrap();
        let p = build_block_jacobi(&a, &part, BlockJacobiOptions::default()).unwrap();
        let bj = p.as_block_jacobi().unwrap();
        let v = random_vector(a.nrows(), seed ^ 1);
        let z = p.apply(&v).unwrap();

        // Solve the blocks by hand, last block first, and scatter back.
        let perm = part.perm();
        let mut w = vec![0.0; v.len()];
        for (i, &x) in v.iter().enumerate() {
            w[perm[i]] = x;
        }
        let mut y = vec![0.0; v.len()];
        for (r, f) in bj.block_ranges().iter().zip(bj.factors()).rev() {
            let local = lu_solve(f, &w[r.clone()]).unwrap();
            y[r.clone()].copy_from_slice(&local);
        }
        let manual: Vec<f64> = perm.iter().map(|&q| y[q]).collect();
        prop_assert_eq!(z, manual);
    }

    #[test]
    fn hybrid_apply_tracks_double_apply((a, seed) in dominant_matrix()) {
        let n = a.nrows();
        let g = graph_from_matrix(&a).unwrap();
        let part = partition_graph(&g, n.min(4), DEFAULT_IMBALANCE_TOL).unwrap();
        let opts = BlockJacobiOptions { policy: PrecisionPolicy::Hybrid, ..Default::default() };
        let p = build_block_jacobi(&a, &part, opts).unwrap();
        let v = random_vector(n, seed);
        let hi = p.apply(&v).unwrap();
        let v32: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        let lo = p.apply(&v32).unwrap();
        let diff = hi.iter().zip(&lo).map(|(h, l)| (h - *l as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!(diff <= 1e-5 * hpbj::sparse::norm2(&hi), "relative {}", diff / hpbj::sparse::norm2(&hi));
    }

    #[test]
    fn givens_estimates_never_increase_within_a_cycle((a, seed) in dominant_matrix(), m in 2usize..12) {
        let b = random_vector(a.nrows(), seed);
        let cfg = GmresConfig { restart: m, max_restarts: 4, tol: 1e-12, ..Default::default() };
        let (_, rep) = hybrid_restart_gmres(&a, &Preconditioner::identity(a.nrows()), &b, &cfg).unwrap();
        prop_assert_eq!(rep.residual_history.len(), rep.total_iterations + 1);
        for w in rep.residual_history.windows(2) {
            if w[0].cycle == w[1].cycle && w[0].iteration > 0 {
                prop_assert!(w[1].residual <= w[0].residual * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn arnoldi_relation_holds((a, seed) in dominant_matrix(), hybrid in any::<bool>()) {
        let n = a.nrows();
        let g = graph_from_matrix(&a).unwrap();
        let part = partition_graph(&g, n.min(3), DEFAULT_IMBALANCE_TOL).unwrap();
        let policy = if hybrid { PrecisionPolicy::Hybrid } else { PrecisionPolicy::DoubleOnly };
        let p = build_block_jacobi(&a, &part, BlockJacobiOptions { policy, ..Default::default() }).unwrap();
        let start = random_vector(n, seed);
        let steps = n.min(10);
        let residual = |hybrid: bool| -> f64 {
            if hybrid {
                relation_error::<f32>(&a, &p, &start, steps)
            } else {
                relation_error::<f64>(&a, &p, &start, steps)
            }
        };
        let tol = if hybrid { 1e-5 } else { 1e-12 };
        let err = residual(hybrid);
        prop_assert!(err <= tol, "relation error {}", err);
    }

    #[test]
    fn seeded_runs_are_bit_identical((a, seed) in dominant_matrix(), hybrid in any::<bool>()) {
        let b = random_vector(a.nrows(), seed);
        let policy = if hybrid { PrecisionPolicy::Hybrid } else { PrecisionPolicy::DoubleOnly };
        let p = Preconditioner::ilu0(&a, policy).unwrap();
        let cfg = GmresConfig { policy, restart: 5, ..Default::default() };
        let (x1, r1) = hybrid_restart_gmres(&a, &p, &b, &cfg).unwrap();
        let (x2, r2) = hybrid_restart_gmres(&a, &p, &b, &cfg).unwrap();
        prop_assert_eq!(x1, x2);
        prop_assert_eq!(r1.residual_history, r2.residual_history);
    }
}

/// max_j ||A' v_j - V_{j+1} h_j|| / ||A' v_j|| over the built columns, with
/// A' = A M^{-1} applied in binary64 to the stored basis vectors.
fn relation_error<T: Scalar>(
    a: &CsrMatrix,
    p: &Preconditioner,
    start: &[f64],
    steps: usize,
) -> f64 {
    let mut st = ArnoldiState::<T>::new(start, steps).unwrap();
    while st.steps() < steps && !st.breakdown() {
        arnoldi_step(|v: &[T]| a.spmv(&p.apply(v)?), &mut st).unwrap();
    }
    let basis: Vec<Vec<f64>> = st
        .basis()
        .iter()
        .map(|v| v.iter().map(|x| x.widen()).collect())
        .collect();
    let mut worst = 0.0f64;
    for j in 0..st.steps() {
        let av = a.spmv(&p.apply(&basis[j]).unwrap()).unwrap();
        let mut diff = av.clone();
        for (i, &h) in st.column(j).iter().enumerate() {
            if let Some(v) = basis.get(i) {
                for (d, &vk) in diff.iter_mut().zip(v) {
                    *d -= h * vk;
                }
            }
        }
        worst = worst.max(hpbj::sparse::norm2(&diff) / hpbj::sparse::norm2(&av));
    }
    worst
}

fn brute_force_cut(g: &WeightedGraph, cap: usize) -> f64 {
    let n = g.node_count();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) - 1 {
        let ones = mask.count_ones() as usize;
        if ones > cap || n - ones > cap {
            continue;
        }
        let asg: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        best = best.min(g.cut_weight(&asg));
    }
    best
}

fn cap(n: usize) -> usize {
    ((n as f64 * (1.0 + DEFAULT_IMBALANCE_TOL) / 2.0).floor() as usize).max(n.div_ceil(2))
}

#[test]
fn bisection_quality_on_small_fixtures() {
    let path6 = {
        let mut t = Vec::new();
        for i in 0..6 {
            t.push((i, i, 2.0));
            if i + 1 < 6 {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(6, 6, &t).unwrap()
    };
    let fixtures = [
        ("small-4", small_example()),
        ("path-6", path6),
        ("laplacian-3x3", laplacian_2d(3)),
        (
            "convdiff-3x3",
            hpbj::fixtures::convection_diffusion_2d(3, 0.5),
        ),
        ("random-10", random_diagonally_dominant(10, 3, 1.5, 4)),
    ];
    for (name, a) in fixtures {
        let g = graph_from_matrix(&a).unwrap();
        let p = partition_graph(&g, 2, DEFAULT_IMBALANCE_TOL).unwrap();
        let got = g.cut_weight(p.assignment());
        let best = brute_force_cut(&g, cap(a.nrows()));
        assert!(
            got <= 1.5 * best + 1e-12,
            "{name}: cut {got} vs optimum {best}"
        );
    }
}

#[test]
fn bisection_quality_on_random_graphs_is_logged() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let mut misses = Vec::new();
    let trials = 200;
    for t in 0..trials {
        let n = rng.gen_range(4..=10);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.35) {
                    edges.push((i, j, rng.gen_range(0.1..2.0)));
                }
            }
        }
        let g = WeightedGraph::from_edges(n, &edges).unwrap();
        let p = partition_graph(&g, 2, DEFAULT_IMBALANCE_TOL).unwrap();
        let got = g.cut_weight(p.assignment());
        let best = brute_force_cut(&g, cap(n));
        if got > 1.5 * best + 1e-12 {
            misses.push((t, n, got, best));
        }
    }
    // Soft property: report rather than fail, but a broken partitioner
    // would miss on most graphs.
    eprintln!(
        "bisection quality misses: {} of {trials}: {misses:?}",
        misses.len()
    );
    assert!(
        misses.len() * 2 < trials,
        "{} of {trials} random graphs above 1.5x optimum",
        misses.len()
    );
}

#[test]
fn perturbation_rank_stays_small_on_fixtures() {
    for a in [
        small_example(),
        laplacian_2d(8),
        random_diagonally_dominant(50, 4, 1.5, 2),
    ] {
        let g = graph_from_matrix(&a).unwrap();
        let part = partition_graph(&g, 4.min(a.nrows()), DEFAULT_IMBALANCE_TOL).unwrap();
        let p = build_block_jacobi(&a, &part, BlockJacobiOptions::default()).unwrap();
        for (f, r) in p
            .as_block_jacobi()
            .unwrap()
            .factors()
            .iter()
            .zip(p.as_block_jacobi().unwrap().block_ranges())
        {
            assert!(f.perturbations().len() * 2 < r.len().max(1));
        }
    }
}

#[test]
fn parallel_spmv_matches_row_order_reference() {
    let a = laplacian_2d(80);
    let x = random_vector(a.ncols(), 3);
    let y = a.spmv(&x).unwrap();
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let mut acc = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            acc += v * x[c];
        }
        assert_eq!(y[i].to_bits(), acc.to_bits(), "row {i}");
    }
}
