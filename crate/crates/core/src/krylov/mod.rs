//! Restarted GMRES and its building blocks.

mod arnoldi;
mod givens;
mod gmres;
mod ritz;

pub use arnoldi::{arnoldi_step, ArnoldiState};
pub use givens::{solve_hessenberg_ls, GivensLeastSquares};
pub use gmres::{
    gmres_cycle, hybrid_restart_gmres, restarted_gmres_from, CycleReport, GmresConfig,
    HistoryEntry, ResidualScale, SolveReport, WallTimes, LOW_PRECISION_FLOOR,
};
pub use ritz::{hessenberg_eigenvalues, ritz_values};
