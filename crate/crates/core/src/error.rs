//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("matrix is not Hermitian (max deviation {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPositive { min_eig: f64 },

    #[error("map is not completely positive (min Choi eigenvalue {min_choi:.3e})")]
    NotCompletelyPositive { min_choi: f64 },

    #[error("map is not trace-preserving (defect {defect:.3e})")]
    NotTracePreserving { defect: f64 },

    #[error("family is not a quantum semi-Markov map: {0}")]
    NotSemiMarkov(String),

    #[error("survival operator loses positivity at t = {t:.6} (min eigenvalue {min_eig:.3e})")]
    SurvivalNotPositive { t: f64, min_eig: f64 },

    #[error(
        "series did not converge within {n_max} terms (last term magnitude {last_magnitude:.3e})"
    )]
    SeriesDiverged { n_max: usize, last_magnitude: f64 },

    #[error("singular operator: {0}")]
    Singular(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error (line {line}): {msg}")]
    Config { line: usize, msg: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
