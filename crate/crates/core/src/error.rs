use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("halfspace normal must be nonzero")]
    InvalidHalfspace,

    #[error("constraint is violated (g = {value:e}) but its subgradient is zero")]
    DegenerateSeparator { value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// An iteration could not make progress: inner-loop cap reached,
    /// degenerate separator, or a collapsed stepsize.
    #[error("solver stalled: {0}")]
    Stalled(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// The exact projection did not reach its tolerance. `best` is the last
    /// iterate and `residual` the remaining error measure.
    #[error("projection failed after {iterations} iterations (residual {residual:e})")]
    ProjectionFailure {
        best: DVector<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
