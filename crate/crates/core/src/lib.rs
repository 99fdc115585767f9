//! Sparse linear solvers built around restarted GMRES with a block-Jacobi
//! preconditioner whose blocks come from a graph partition of the matrix.
//! Block factors are computed in binary64 and may be applied in binary32.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fixtures;
pub mod graph;
pub mod krylov;
pub mod lu;
pub mod mtx;
pub mod precision;
pub mod precond;
pub mod sparse;

pub use error::{Error, Result};
pub use graph::{
    graph_from_matrix, import_partition, partition_graph, write_partition, Partition, WeightedGraph,
};
pub use krylov::{
    hybrid_restart_gmres, restarted_gmres_from, GmresConfig, ResidualScale, SolveReport,
};
pub use lu::{gp_lu, ilu0, lu_solve, LuFactors};
pub use mtx::{
    read_matrix_market, read_matrix_market_file, write_matrix_market, write_matrix_market_file,
};
pub use precision::{Precision, PrecisionPolicy, Scalar};
pub use precond::{
    apply_neumann, build_block_jacobi, BlockJacobiOptions, Preconditioner, PreconditionerStats,
};
pub use sparse::CsrMatrix;
