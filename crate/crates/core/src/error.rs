use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CesError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("moment undefined: {0}")]
    MomentUndefined(String),

    #[error("shape matrix is off the manifold: |S(V) - 1| = {0:.3e}")]
    ManifoldViolation(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("parameterization is not identifiable: {0}")]
    Identifiability(String),

    #[error("fixed point did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("scale functional mismatch: {0}")]
    ScaleMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CesError>;

impl From<std::io::Error> for CesError {
    fn from(e: std::io::Error) -> Self {
        CesError::Io(e.to_string())
    }
}

impl From<csv::Error> for CesError {
    fn from(e: csv::Error) -> Self {
        CesError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CesError {
    fn from(e: serde_json::Error) -> Self {
        CesError::Config(e.to_string())
    }
}
