use thiserror::Error;

/// Errors raised by the covariance estimation and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovError {
    #[error("antenna index {index} out of range for {nt} antennas")]
    IndexOutOfRange { index: usize, nt: usize },

    #[error("coordinate ({x}, {y}) is outside the array")]
    CoordOutOfRange { x: i32, y: i32 },

    #[error("invalid antenna layout: {0}")]
    InvalidLayout(String),

    #[error("duplicate antenna coordinate ({x}, {y})")]
    DuplicateCoordinate { x: i32, y: i32 },

    #[error("correlation factor {0} outside [0, 1]")]
    InvalidCorrelation(f64),

    #[error("shrinkage weight {0} outside [0, 1]")]
    InvalidKappa(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("precoder direction is degenerate (zero channel estimate)")]
    DegeneratePrecoder,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigendecomposition did not converge")]
    EigenFailure,
}

pub type Result<T, E = CovError> = std::result::Result<T, E>;
