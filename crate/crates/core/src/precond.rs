//! Right preconditioners behind one apply interface: identity, ILU(0) and the
//! (hybrid-precision) block-Jacobi preconditioner built from a graph partition.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Partition;
use crate::lu::{gp_lu, ilu0, LuFactors};
use crate::precision::{PrecisionPolicy, Scalar};
use crate::sparse::CsrMatrix;

/// Blocks up to this dimension get an exact dense condition number.
pub const EXACT_COND_MAX_DIM: usize = 64;

/// Per-block diagnostics of a block-Jacobi preconditioner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreconditionerStats {
    #[serde(rename = "dim")]
    pub block_dim: usize,
    #[serde(rename = "nnz")]
    pub block_nnz: usize,
    #[serde(rename = "perturbations")]
    pub perturbation_count: usize,
    pub cond_estimate: f64,
    /// Relative error bound with the implementation constant normalized to 1.
    pub error_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockJacobiOptions {
    pub eps_pivot: f64,
    /// Truncation order of the Neumann series; 0 means plain block solves.
    pub neumann_order: usize,
    pub policy: PrecisionPolicy,
}

impl Default for BlockJacobiOptions {
    fn default() -> Self {
        Self {
            eps_pivot: crate::lu::DEFAULT_EPS_PIVOT,
            neumann_order: 0,
            policy: PrecisionPolicy::DoubleOnly,
        }
    }
}

/// Block-diagonal preconditioner `diag(M_1, ..., M_s)` of `Q A Q^T`.
#[derive(Debug, Clone)]
pub struct BlockJacobi {
    partition: Partition,
    ranges: Vec<Range<usize>>,
    factors: Vec<LuFactors>,
    neumann_order: usize,
    // Q A Q^T, kept only when the Neumann series is in use.
    permuted: Option<CsrMatrix>,
    stats: Vec<PreconditionerStats>,
}

#[derive(Debug, Clone)]
pub enum PreconditionerKind {
    Identity,
    Ilu0(LuFactors),
    BlockJacobi(BlockJacobi),
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    n: usize,
    kind: PreconditionerKind,
    policy: PrecisionPolicy,
}

impl Preconditioner {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            kind: PreconditionerKind::Identity,
            policy: PrecisionPolicy::DoubleOnly,
        }
    }

    /// ILU(0) of the whole matrix.
    pub fn ilu0(a: &CsrMatrix, policy: PrecisionPolicy) -> Result<Self> {
        let factors = ilu0(a)?;
        if policy == PrecisionPolicy::Hybrid {
            factors.materialize_low();
        }
        Ok(Self {
            n: a.nrows(),
            kind: PreconditionerKind::Ilu0(factors),
            policy,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &PreconditionerKind {
        &self.kind
    }

    pub fn policy(&self) -> PrecisionPolicy {
        self.policy
    }

    pub fn label(&self) -> &'static str {
        match self.kind {
            PreconditionerKind::Identity => "none",
            PreconditionerKind::Ilu0(_) => "ilu0",
            PreconditionerKind::BlockJacobi(_) => "block-jacobi",
        }
    }

    pub fn as_block_jacobi(&self) -> Option<&BlockJacobi> {
        match &self.kind {
            PreconditionerKind::BlockJacobi(bj) => Some(bj),
            _ => None,
        }
    }

    /// Per-block statistics; empty unless this is a block-Jacobi preconditioner.
    pub fn block_stats(&self) -> &[PreconditionerStats] {
        self.as_block_jacobi().map_or(&[], |bj| &bj.stats)
    }

    /// `z = M^{-1} v` in the precision of `T`.
    pub fn apply<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: v.len(),
            });
        }
        match &self.kind {
            PreconditionerKind::Identity => Ok(v.to_vec()),
            PreconditionerKind::Ilu0(f) => f.solve(v),
            PreconditionerKind::BlockJacobi(bj) => Ok(bj.apply(v)),
        }
    }
}

/// Builds the block-Jacobi preconditioner of `a` for `partition`.
///
/// `a` is permuted by the partition's `Q`, the `s` diagonal blocks of
/// `Q A Q^T` are sliced out and each is factored in binary64 with
/// small-pivot regularization. Entries outside the diagonal blocks are
/// dropped. Under the hybrid policy the factors are also rounded to binary32.
pub fn build_block_jacobi(
    a: &CsrMatrix,
    partition: &Partition,
    options: BlockJacobiOptions,
) -> Result<Preconditioner> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    if partition.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: partition.len(),
        });
    }
    let partition = partition.clone().measure(a)?;
    let permuted = a.permute_symmetric(partition.perm())?;
    let ranges = partition.block_ranges();
    let blocks: Vec<CsrMatrix> = ranges
        .iter()
        .map(|r| permuted.diagonal_block(r.clone()))
        .collect();

    let low_roundoff = options.policy.working().unit_roundoff();
    let high_roundoff = options.policy.high().unit_roundoff();
    let factor_one = |block: &CsrMatrix| -> Result<(LuFactors, PreconditionerStats)> {
        let f = gp_lu(block, options.eps_pivot)?;
        if options.policy == PrecisionPolicy::Hybrid {
            f.materialize_low();
        }
        let cond = cond_estimate_block(&f);
        let stats = PreconditionerStats {
            block_dim: block.nrows(),
            block_nnz: block.nnz(),
            perturbation_count: f.perturbations().len(),
            cond_estimate: cond,
            error_bound: block_error_bound(cond, low_roundoff, high_roundoff),
        };
        Ok((f, stats))
    };

    #[cfg(feature = "parallel")]
    let built: Vec<Result<(LuFactors, PreconditionerStats)>> = {
        use rayon::prelude::*;
        blocks.par_iter().map(factor_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let built: Vec<Result<(LuFactors, PreconditionerStats)>> =
        blocks.iter().map(factor_one).collect();

    let mut factors = Vec::with_capacity(built.len());
    let mut stats = Vec::with_capacity(built.len());
    for (b, item) in built.into_iter().enumerate() {
        let (f, s) = item.map_err(|e| match e {
            Error::SingularBlock { column } => Error::SingularBlock {
                column: ranges[b].start + column,
            },
            other => other,
        })?;
        factors.push(f);
        stats.push(s);
    }

    let permuted = (options.neumann_order > 0).then_some(permuted);
    Ok(Preconditioner {
        n: a.nrows(),
        kind: PreconditionerKind::BlockJacobi(BlockJacobi {
            partition,
            ranges,
            factors,
            neumann_order: options.neumann_order,
            permuted,
            stats,
        }),
        policy: options.policy,
    })
}

impl BlockJacobi {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn factors(&self) -> &[LuFactors] {
        &self.factors
    }

    pub fn stats(&self) -> &[PreconditionerStats] {
        &self.stats
    }

    pub fn neumann_order(&self) -> usize {
        self.neumann_order
    }

    /// Index ranges of the blocks in the permuted ordering.
    pub fn block_ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    fn apply<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        let perm = self.partition.perm();
        let mut w = vec![T::zero(); v.len()];
        for (i, &vi) in v.iter().enumerate() {
            w[perm[i]] = vi;
        }
        let mut y = self.solve_blocks(&w);
        if let Some(pa) = &self.permuted {
            // y_{k+1} = y_k + Phi^{-1} (w - A y_k)
            let mut ay = vec![T::zero(); w.len()];
            for _ in 0..self.neumann_order {
                pa.spmv_into(&y, &mut ay);
                let r: Vec<T> = w.iter().zip(&ay).map(|(&wi, &ai)| wi - ai).collect();
                let dy = self.solve_blocks(&r);
                for (yi, di) in y.iter_mut().zip(dy) {
                    *yi += di;
                }
            }
        }
        perm.iter().map(|&p| y[p]).collect()
    }

    // Independent block solves on a vector in the permuted frame.
    fn solve_blocks<T: Scalar>(&self, w: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); w.len()];
        let mut chunks: Vec<&mut [T]> = Vec::with_capacity(self.ranges.len());
        let mut rest = out.as_mut_slice();
        for r in &self.ranges {
            let (head, tail) = rest.split_at_mut(r.len());
            chunks.push(head);
            rest = tail;
        }
        let solve = |(f, (chunk, r)): (&LuFactors, (&mut [T], &Range<usize>))| {
            let local = &w[r.clone()];
            for (k, &row) in f.row_perm().iter().enumerate() {
                chunk[k] = local[row];
            }
            f.solve_permuted_in_place(chunk);
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if self.ranges.len() > 1 && w.len() >= 4096 {
                self.factors
                    .par_iter()
                    .zip(chunks.into_par_iter().zip(self.ranges.par_iter()))
                    .for_each(solve);
                return out;
            }
        }
        self.factors
            .iter()
            .zip(chunks.into_iter().zip(self.ranges.iter()))
            .for_each(solve);
        out
    }

    /// The assembled block-diagonal preconditioner matrix `M~` (including
    /// pivot perturbations) in the original ordering of `a`.
    pub fn assemble(&self, a: &CsrMatrix) -> Result<CsrMatrix> {
        let perm = self.partition.perm();
        let permuted = a.permute_symmetric(perm)?;
        let mut inverse = vec![0usize; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let mut trip = Vec::new();
        for (r, f) in self.ranges.iter().zip(&self.factors) {
            let block = permuted.diagonal_block(r.clone());
            for i in 0..block.nrows() {
                let (cols, vals) = block.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    trip.push((inverse[r.start + i], inverse[r.start + c], v));
                }
            }
            for rec in f.perturbations() {
                let row = f.row_perm()[rec.pivot_index];
                trip.push((
                    inverse[r.start + row],
                    inverse[r.start + rec.pivot_index],
                    rec.replaced_value - rec.original_value,
                ));
            }
        }
        CsrMatrix::from_triplets(a.nrows(), a.ncols(), &trip)
    }
}

/// Truncated Neumann approximation `sum_{i=0}^{k} (I - Phi^{-1} A)^i Phi^{-1} v`
/// where `Phi` is the block diagonal of `a` held by `p`. Evaluated by repeated
/// correction, never forming a matrix power.
pub fn apply_neumann(
    p: &Preconditioner,
    a: &CsrMatrix,
    v: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    let bj = p.as_block_jacobi().ok_or(Error::MissingNeumannData {
        requested: order,
        available: 0,
    })?;
    if order > bj.neumann_order {
        return Err(Error::MissingNeumannData {
            requested: order,
            available: bj.neumann_order,
        });
    }
    if a.nrows() != p.dim() || v.len() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: v.len().min(a.nrows()),
        });
    }
    let phi_inv = |x: &[f64]| -> Vec<f64> {
        let perm = bj.partition.perm();
        let mut w = vec![0.0; x.len()];
        for (i, &xi) in x.iter().enumerate() {
            w[perm[i]] = xi;
        }
        let y = bj.solve_blocks(&w);
        perm.iter().map(|&q| y[q]).collect()
    };
    let mut z = phi_inv(v);
    for _ in 0..order {
        let az = a.spmv(&z)?;
        let r: Vec<f64> = v.iter().zip(&az).map(|(vi, ai)| vi - ai).collect();
        for (zi, di) in z.iter_mut().zip(phi_inv(&r)) {
            *zi += di;
        }
    }
    Ok(z)
}

/// `(cond * eps_high + eps_low) * cond`, the per-block relative error bound
/// with its implementation constant set to 1.
pub fn block_error_bound(cond: f64, eps_low: f64, eps_high: f64) -> f64 {
    (cond * eps_high + eps_low) * cond
}

/// 1-norm condition number of the matrix represented by `factors`.
///
/// Exact for blocks up to [`EXACT_COND_MAX_DIM`]; larger blocks use Hager's
/// estimator for the inverse norm, which never overestimates.
pub fn cond_estimate_block(factors: &LuFactors) -> f64 {
    let n = factors.dim();
    if n == 0 {
        return 1.0;
    }
    let norm = factors.product_one_norm();
    let inv_norm = if n <= EXACT_COND_MAX_DIM {
        exact_inverse_one_norm(factors)
    } else {
        hager_inverse_one_norm(factors)
    };
    (norm * inv_norm).max(1.0)
}

/// `||A^{-1}||_1` from `n` solves with unit vectors.
pub fn exact_inverse_one_norm(factors: &LuFactors) -> f64 {
    let n = factors.dim();
    let mut e = vec![0.0; n];
    let mut best = 0.0f64;
    for j in 0..n {
        e[j] = 1.0;
        let col = factors.solve(&e).expect("dimension matches");
        e[j] = 0.0;
        best = best.max(col.iter().map(|v: &f64| v.abs()).sum());
    }
    best
}

/// Hager's 1-norm estimate of `A^{-1}` (with Higham's extra test vector),
/// using solves with `A` and `A^T`.
pub fn hager_inverse_one_norm(factors: &LuFactors) -> f64 {
    let n = factors.dim();
    let solve = |x: &[f64]| factors.solve(x).expect("dimension matches");
    let solve_t = |x: &[f64]| factors.solve_transpose(x).expect("dimension matches");

    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0f64;
    let mut last_j = usize::MAX;
    for iter in 0..5 {
        let y = solve(&x);
        let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
        if iter > 0 && y_norm <= est {
            break;
        }
        est = y_norm;
        let xi: Vec<f64> = y
            .iter()
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let z = solve_t(&xi);
        let (j, zmax) = z.iter().enumerate().fold((0, -1.0f64), |acc, (k, v)| {
            if v.abs() > acc.1 {
                (k, v.abs())
            } else {
                acc
            }
        });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if iter > 0 && (zmax <= ztx || j == last_j) {
            break;
        }
        last_j = j;
        x.iter_mut().for_each(|v| *v = 0.0);
        x[j] = 1.0;
    }
    let alt: Vec<f64> = (0..n)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        })
        .collect();
    let alt_est = 2.0 * solve(&alt).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    est.max(alt_est)
}
