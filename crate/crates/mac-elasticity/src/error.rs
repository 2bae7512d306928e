use thiserror::Error;

/// Errors produced by grid construction, field algebra, assembly and solves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("location {location:?} is not valid on a {dims}-dimensional grid")]
    LocationDimsMismatch {
        location: crate::fields::GridLocation,
        dims: usize,
    },

    #[error("fields live on different grids or locations")]
    FieldMismatch,

    #[error("expected {expected:?} along axis {axis}, got {got:?}")]
    AxisKindMismatch {
        axis: usize,
        expected: crate::fields::AxisKind,
        got: crate::fields::AxisKind,
    },

    #[error("boundary trace has length {got}, expected {expected}")]
    TraceLengthMismatch { got: usize, expected: usize },

    #[error("nonzero boundary trace on a field that must vanish on the boundary")]
    NonzeroBoundaryTrace,

    #[error("vector length {got} does not match system size {expected}")]
    LengthMismatch { got: usize, expected: usize },

    #[error("matrix is singular (row {row} has no entries or a zero pivot)")]
    Singular { row: usize },

    #[error("iterative solver did not reach tolerance {tol:e} in {iterations} iterations (best residual {residual:e})")]
    NotConverged {
        tol: f64,
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
