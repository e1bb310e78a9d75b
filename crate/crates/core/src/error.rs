//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors produced by the solver, the detectors and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of the operands do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An algorithm or model parameter is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (best estimate {best})")]
    Convergence { iterations: usize, best: f64 },

    /// A factorization broke down numerically.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The input carries no usable signal (zero pilot energy, zero channel, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The exhaustive search would exceed its candidate budget.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Malformed configuration file or override.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
