use num_complex::Complex64;
use serde::Serialize;
use web_time::Instant;

use super::arnoldi::{arnoldi_step, ArnoldiState};
use super::givens::GivensLeastSquares;
use super::ritz::ritz_values;
use crate::error::{Error, Result};
use crate::precision::{Precision, PrecisionPolicy, Scalar};
use crate::precond::Preconditioner;
use crate::sparse::{norm2, CsrMatrix};

/// Multiple of the binary32 unit roundoff (relative to the cycle's initial
/// residual) at which a hybrid cycle ends early.
pub const LOW_PRECISION_FLOOR: f64 = 100.0;

/// What the residual norm is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualScale {
    /// `||r|| / ||b||`
    #[default]
    Relative,
    /// `||r||`
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmresConfig {
    pub restart: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub policy: PrecisionPolicy,
    pub scale: ResidualScale,
    /// Record Ritz values from the first cycle's Hessenberg matrix.
    pub collect_ritz: bool,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self {
            restart: 50,
            tol: 1e-8,
            max_restarts: 40,
            policy: PrecisionPolicy::DoubleOnly,
            scale: ResidualScale::Relative,
            collect_ritz: false,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restart == 0 {
            return Err(Error::InvalidArgument(
                "restart length must be at least 1".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_restarts == 0 {
            return Err(Error::InvalidArgument(
                "max_restarts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One residual sample: cycle index, global iteration count, residual
/// (scaled as configured). Iteration 0 is the initial residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub cycle: usize,
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct WallTimes {
    pub setup_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub total_iterations: usize,
    /// Number of restarts, i.e. cycles run minus one.
    pub restarts: usize,
    pub residual_history: Vec<HistoryEntry>,
    /// True residual recomputed in binary64 at the end of every cycle.
    pub cycle_residuals: Vec<f64>,
    pub final_residual: f64,
    pub breakdown: bool,
    pub rank_deficient: bool,
    pub wall_times: WallTimes,
    #[serde(skip)]
    pub ritz: Option<Vec<Complex64>>,
}

/// Outcome of a single restart cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub iterations: usize,
    /// Least-squares residual estimates after each step (unscaled).
    pub estimates: Vec<f64>,
    pub breakdown: bool,
    pub rank_deficient: bool,
    pub hessenberg: Vec<Vec<f64>>,
}

/// One restart cycle from `x0`: Arnoldi on `A M^{-1}` in the working
/// precision of `policy`, then the binary64 update `x = x0 + M^{-1} (V y)`.
/// Stops early once the estimate drops to `threshold`.
pub fn gmres_cycle(
    a: &CsrMatrix,
    p: &Preconditioner,
    b: &[f64],
    x0: &[f64],
    restart: usize,
    threshold: f64,
    policy: PrecisionPolicy,
) -> Result<(Vec<f64>, CycleReport)> {
    check_dims(a, p, b, x0)?;
    let r0 = a.residual(b, x0)?;
    match policy {
        PrecisionPolicy::DoubleOnly => cycle::<f64>(a, p, &r0, x0, restart, threshold),
        PrecisionPolicy::Hybrid => cycle::<f32>(a, p, &r0, x0, restart, threshold),
    }
}

fn check_dims(a: &CsrMatrix, p: &Preconditioner, b: &[f64], x0: &[f64]) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            nrows: a.nrows(),
            ncols: a.ncols(),
        });
    }
    let n = a.nrows();
    for len in [p.dim(), b.len(), x0.len()] {
        if len != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: len,
            });
        }
    }
    Ok(())
}

fn cycle<T: Scalar>(
    a: &CsrMatrix,
    p: &Preconditioner,
    r0: &[f64],
    x0: &[f64],
    restart: usize,
    threshold: f64,
) -> Result<(Vec<f64>, CycleReport)> {
    let beta = norm2(r0);
    if beta == 0.0 {
        return Ok((
            x0.to_vec(),
            CycleReport {
                iterations: 0,
                estimates: Vec::new(),
                breakdown: false,
                rank_deficient: false,
                hessenberg: Vec::new(),
            },
        ));
    }
    // A binary32 basis cannot push the estimate much below u_32 * beta;
    // iterating past that point only stalls, so hand over to the restart.
    let floor = match T::PRECISION {
        Precision::Single => LOW_PRECISION_FLOOR * T::UNIT_ROUNDOFF * beta,
        Precision::Double => 0.0,
    };
    let stop = threshold.max(floor);
    let mut state = ArnoldiState::<T>::new(r0, restart)?;
    let mut ls = GivensLeastSquares::new(beta);
    let mut estimates = Vec::with_capacity(restart);
    let op = |v: &[T]| -> Result<Vec<T>> { a.spmv(&p.apply(v)?) };
    for j in 0..restart {
        arnoldi_step(op, &mut state)?;
        let est = ls.push_column(state.column(j));
        estimates.push(est);
        if est <= stop || state.breakdown() {
            break;
        }
    }
    let y = ls.solve();
    let mut vy = vec![0.0f64; a.nrows()];
    for (v, &yi) in state.basis().iter().zip(&y) {
        for (acc, &vk) in vy.iter_mut().zip(v) {
            *acc += yi * vk.widen();
        }
    }
    let z = p.apply(&vy)?;
    let x: Vec<f64> = x0.iter().zip(&z).map(|(xi, zi)| xi + zi).collect();
    Ok((
        x,
        CycleReport {
            iterations: state.steps(),
            estimates,
            breakdown: state.breakdown(),
            rank_deficient: ls.rank_deficient(),
            hessenberg: state.hessenberg_square(),
        },
    ))
}

/// Right-preconditioned restarted GMRES from a zero initial guess.
pub fn hybrid_restart_gmres(
    a: &CsrMatrix,
    p: &Preconditioner,
    b: &[f64],
    config: &GmresConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    restarted_gmres_from(a, p, b, &vec![0.0; b.len()], config)
}

/// Restarted GMRES from `x0`. Convergence is judged on the true binary64
/// residual recomputed after every cycle. When the iteration does not
/// converge, the iterate with the smallest true residual is returned.
pub fn restarted_gmres_from(
    a: &CsrMatrix,
    p: &Preconditioner,
    b: &[f64],
    x0: &[f64],
    config: &GmresConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    config.validate()?;
    check_dims(a, p, b, x0)?;
    let start = Instant::now();
    let b_norm = norm2(b);
    let scale = match config.scale {
        ResidualScale::Relative => b_norm,
        ResidualScale::Absolute => 1.0,
    };
    let mut report = SolveReport {
        converged: false,
        total_iterations: 0,
        restarts: 0,
        residual_history: Vec::new(),
        cycle_residuals: Vec::new(),
        final_residual: 0.0,
        breakdown: false,
        rank_deficient: false,
        wall_times: WallTimes::default(),
        ritz: None,
    };
    if scale == 0.0 {
        // b = 0 under the relative test: the solution is exactly zero.
        report.converged = true;
        report.residual_history.push(HistoryEntry {
            cycle: 0,
            iteration: 0,
            residual: 0.0,
        });
        report.wall_times.solve_ms = start.elapsed().as_secs_f64() * 1e3;
        return Ok((vec![0.0; b.len()], report));
    }
    let threshold = config.tol * scale;
    let mut x = x0.to_vec();
    let mut res = norm2(&a.residual(b, &x)?);
    report.residual_history.push(HistoryEntry {
        cycle: 0,
        iteration: 0,
        residual: res / scale,
    });
    let mut best = (res, x.clone());
    let mut cycles = 0;
    while res > threshold && cycles < config.max_restarts {
        let (x_new, cyc) = gmres_cycle(a, p, b, &x, config.restart, threshold, config.policy)?;
        for est in &cyc.estimates {
            report.total_iterations += 1;
            report.residual_history.push(HistoryEntry {
                cycle: cycles,
                iteration: report.total_iterations,
                residual: est / scale,
            });
        }
        report.breakdown |= cyc.breakdown;
        report.rank_deficient |= cyc.rank_deficient;
        if config.collect_ritz && report.ritz.is_none() && !cyc.hessenberg.is_empty() {
            report.ritz = ritz_values(&cyc.hessenberg).ok();
        }
        cycles += 1;
        x = x_new;
        res = norm2(&a.residual(b, &x)?);
        if !res.is_finite() {
            break;
        }
        report.cycle_residuals.push(res / scale);
        if res < best.0 {
            best = (res, x.clone());
        }
        if cyc.iterations == 0 {
            break;
        }
    }
    report.converged = res <= threshold;
    if !report.converged {
        res = best.0;
        x = best.1;
    }
    report.restarts = cycles.saturating_sub(1);
    report.final_residual = res / scale;
    report.wall_times.solve_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((x, report))
}
