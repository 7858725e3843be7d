//! Error type shared across the synthesis engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("element {index} at ({x}, {y}, 0) has no mirror counterpart within tol {tol}")]
    SymmetryViolation { index: usize, x: f64, y: f64, tol: f64 },

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("selection stagnated: correlations vanished before any selection")]
    Stagnation,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("metric out of range: {0}")]
    MetricOutOfRange(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
