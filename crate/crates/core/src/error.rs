use thiserror::Error;

/// Errors raised by the sparse kernels, preconditioners and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("entry ({row}, {col}) out of range for a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix must be square, got {nrows}x{ncols}")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("malformed CSR structure: {0}")]
    InvalidStructure(String),

    #[error("permutation is not a bijection on 0..{0}")]
    InvalidPermutation(usize),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("singular block: zero pivot in column {column}")]
    SingularBlock { column: usize },

    #[error("zero diagonal pivot in row {row}")]
    ZeroPivot { row: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("preconditioner holds no Neumann data for order {requested} (built with {available})")]
    MissingNeumannData { requested: usize, available: usize },

    #[error("Arnoldi step rejected: {0}")]
    ArnoldiState(&'static str),

    #[error("QR iteration did not converge after {0} sweeps")]
    EigenNoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
