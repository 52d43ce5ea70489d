//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures raised by model construction, simulation and the solvers.
#[derive(Debug, Error)]
pub enum RatchetError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("volatility matrix is numerically singular (condition number {condition:.3e})")]
    SingularVolatility { condition: f64 },

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("numerical instability at step size {step:.3e}: {detail}")]
    Instability { step: f64, detail: String },

    #[error("point outside the solved domain: {0}")]
    OutOfDomain(String),

    #[error("buffer x = {x} lies outside the injection region (xi = {xi})")]
    OutOfRegion { x: f64, xi: f64 },

    #[error("degenerate second derivative: {0}")]
    Degenerate(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl RatchetError {
    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            RatchetError::InvalidParameter(_) => "invalid_parameter",
            RatchetError::SingularVolatility { .. } => "singular_volatility",
            RatchetError::Unsupported(_) => "unsupported",
            RatchetError::Instability { .. } => "instability",
            RatchetError::OutOfDomain(_) => "out_of_domain",
            RatchetError::OutOfRegion { .. } => "out_of_region",
            RatchetError::Degenerate(_) => "degenerate",
            RatchetError::GridMismatch(_) => "grid_mismatch",
            RatchetError::Io(_) => "io",
            RatchetError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, RatchetError>;
