use thiserror::Error;

/// Errors produced by the numerical routines and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{a}, {b}]: need 0 <= a <= b")]
    InvalidInterval { a: f64, b: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("Picard iteration did not converge after {iterations} iterations (last residual {residual:e}): {reason}")]
    Convergence { iterations: usize, residual: f64, reason: String },

    #[error("map is not contractive: observed factor {factor}")]
    NonContractive { factor: f64 },

    #[error("pair (p, q) = ({p}, {q}) cannot be certified: {reason}")]
    NonCertifiable { p: String, q: String, reason: String },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    CheckFailed(String),

    #[error("missing prerequisite: {0}")]
    Dependency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
