//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by grid construction, state handling, propagation and
/// the stationary-state solvers.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("time grid mismatch: {0}")]
    TimeGridMismatch(String),

    #[error("control parameter {lambda} outside bounds [{lo}, {hi}]")]
    LambdaOutOfBounds { lambda: f64, lo: f64, hi: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("wavefunction norm {norm} deviates from 1 by more than {tol}")]
    NotNormalized { norm: f64, tol: f64 },

    #[error("norm drift {drift:.3e} at t = {t} ms exceeds tolerance {tol:.3e} per ms")]
    NormDrift { drift: f64, t: f64, tol: f64 },

    #[error("stationary solver did not converge: residual {residual:.3e} after {iterations} iterations (target {target:.3e})")]
    StationaryNotConverged {
        residual: f64,
        target: f64,
        iterations: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape function is zero at node {node} but the control differs from its reference there")]
    ShapeDivisionByZero { node: usize },
}

/// Errors raised by the experiment harness: configuration handling,
/// result export and run orchestration.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
