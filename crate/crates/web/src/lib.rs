//! WebAssembly bindings for the browser demo. Every export takes a grid
//! problem description and returns a JSON string; the page draws it on a
//! canvas. The plain Rust functions are public so they can be tested natively.

use hpbj::fixtures::{convection_diffusion_2d, laplacian_2d};
use hpbj::graph::DEFAULT_IMBALANCE_TOL;
use hpbj::{
    build_block_jacobi, graph_from_matrix, hybrid_restart_gmres, partition_graph,
    BlockJacobiOptions, CsrMatrix, GmresConfig, Partition, PrecisionPolicy, Preconditioner,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid side accepted, to keep a browser tab responsive.
pub const MAX_GRID: usize = 96;

/// Builds the grid operator. `wind` 0 gives the 5-point Laplacian.
pub fn grid_matrix(grid: usize, wind: f64) -> Result<CsrMatrix, String> {
    if !(2..=MAX_GRID).contains(&grid) {
        return Err(format!(
            "grid side must be between 2 and {MAX_GRID}, got {grid}"
        ));
    }
    if !wind.is_finite() {
        return Err("wind must be finite".into());
    }
    Ok(if wind == 0.0 {
        laplacian_2d(grid)
    } else {
        convection_diffusion_2d(grid, wind)
    })
}

fn partition(a: &CsrMatrix, blocks: usize) -> Result<Partition, String> {
    let g = graph_from_matrix(a).map_err(|e| e.to_string())?;
    partition_graph(&g, blocks, DEFAULT_IMBALANCE_TOL).map_err(|e| e.to_string())
}

fn block_jacobi(
    a: &CsrMatrix,
    blocks: usize,
    policy: PrecisionPolicy,
) -> Result<Preconditioner, String> {
    let options = BlockJacobiOptions {
        policy,
        ..Default::default()
    };
    build_block_jacobi(a, &partition(a, blocks)?, options).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct Curve {
    pub label: String,
    pub converged: bool,
    pub iterations: usize,
    /// Relative residual after each iteration, starting at iteration 0.
    pub residuals: Vec<f64>,
}

/// Residual histories for no preconditioner, ILU(0) and block-Jacobi in
/// both precision policies, with `b = A * 1`.
pub fn convergence_curves(
    grid: usize,
    wind: f64,
    blocks: usize,
    restart: usize,
) -> Result<Vec<Curve>, String> {
    let a = grid_matrix(grid, wind)?;
    let b = a.spmv(&vec![1.0; a.nrows()]).map_err(|e| e.to_string())?;
    let runs: Vec<(&str, Preconditioner, PrecisionPolicy)> = vec![
        (
            "none",
            Preconditioner::identity(a.nrows()),
            PrecisionPolicy::DoubleOnly,
        ),
        (
            "ilu0",
            Preconditioner::ilu0(&a, PrecisionPolicy::DoubleOnly).map_err(|e| e.to_string())?,
            PrecisionPolicy::DoubleOnly,
        ),
        (
            "block-jacobi double",
            block_jacobi(&a, blocks, PrecisionPolicy::DoubleOnly)?,
            PrecisionPolicy::DoubleOnly,
        ),
        (
            "block-jacobi hybrid",
            block_jacobi(&a, blocks, PrecisionPolicy::Hybrid)?,
            PrecisionPolicy::Hybrid,
        ),
    ];
    runs.into_iter()
        .map(|(label, p, policy)| {
            let cfg = GmresConfig {
                restart,
                policy,
                max_restarts: 20,
                ..Default::default()
            };
            let (_, rep) = hybrid_restart_gmres(&a, &p, &b, &cfg).map_err(|e| e.to_string())?;
            Ok(Curve {
                label: label.into(),
                converged: rep.converged,
                iterations: rep.total_iterations,
                residuals: rep.residual_history.iter().map(|h| h.residual).collect(),
            })
        })
        .collect()
}

#[derive(Serialize)]
pub struct Spectra {
    pub unpreconditioned: Vec<[f64; 2]>,
    pub preconditioned: Vec<[f64; 2]>,
}

fn ritz_of(a: &CsrMatrix, p: &Preconditioner, steps: usize) -> Result<Vec<[f64; 2]>, String> {
    let b = hpbj::fixtures::random_vector(a.nrows(), 1);
    let cfg = GmresConfig {
        restart: steps,
        tol: 1e-15,
        max_restarts: 1,
        collect_ritz: true,
        ..Default::default()
    };
    let (_, rep) = hybrid_restart_gmres(a, p, &b, &cfg).map_err(|e| e.to_string())?;
    let ritz = rep.ritz.ok_or("no Ritz values were produced")?;
    Ok(ritz.iter().map(|z| [z.re, z.im]).collect())
}

/// Ritz values after `steps` Arnoldi steps on `A` and on `A M^-1` with a
/// block-Jacobi `M`.
pub fn ritz_spectra(
    grid: usize,
    wind: f64,
    blocks: usize,
    steps: usize,
) -> Result<Spectra, String> {
    if steps == 0 {
        return Err("steps must be at least 1".into());
    }
    let a = grid_matrix(grid, wind)?;
    let p = block_jacobi(&a, blocks, PrecisionPolicy::DoubleOnly)?;
    Ok(Spectra {
        unpreconditioned: ritz_of(&a, &Preconditioner::identity(a.nrows()), steps)?,
        preconditioned: ritz_of(&a, &p, steps)?,
    })
}

#[derive(Serialize)]
pub struct GridPartition {
    pub grid: usize,
    pub blocks: usize,
    /// Block of grid point `(i, j)` at index `i * grid + j`.
    pub assignment: Vec<usize>,
    pub cut_weight: f64,
    pub imbalance: f64,
}

pub fn grid_partition(grid: usize, wind: f64, blocks: usize) -> Result<GridPartition, String> {
    let a = grid_matrix(grid, wind)?;
    let g = graph_from_matrix(&a).map_err(|e| e.to_string())?;
    let p = partition_graph(&g, blocks, DEFAULT_IMBALANCE_TOL)
        .and_then(|p| p.measure(&a))
        .map_err(|e| e.to_string())?;
    Ok(GridPartition {
        grid,
        blocks,
        cut_weight: g.cut_weight(p.assignment()),
        imbalance: p.imbalance(),
        assignment: p.assignment().to_vec(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn convergence(
    grid: usize,
    wind: f64,
    blocks: usize,
    restart: usize,
) -> Result<String, JsValue> {
    to_js(convergence_curves(grid, wind, blocks, restart))
}

#[wasm_bindgen]
pub fn spectrum(grid: usize, wind: f64, blocks: usize, steps: usize) -> Result<String, JsValue> {
    to_js(ritz_spectra(grid, wind, blocks, steps))
}

#[wasm_bindgen]
pub fn partition_grid(grid: usize, wind: f64, blocks: usize) -> Result<String, JsValue> {
    to_js(grid_partition(grid, wind, blocks))
}
