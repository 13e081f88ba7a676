// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SovError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SovError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("operator is not Hermitian: max |M - M^dag| = {residual:e} > {tol:e}")]
    NotHermitian { residual: f64, tol: f64 },

    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample time {t} does not lie on the noise grid (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("deterministic integration failed at t = {t}")]
    IntegrationFailure { t: f64 },

    #[error("SOV eigenvalue {value:e} is below the roundoff floor {floor:e}")]
    NegativeSov { value: f64, floor: f64 },

    #[error("operators do not commute: ||[H0, L]||_max = {norm:e}")]
    NonCommuting { norm: f64 },

    #[error("non-positive value {value:e} at t = {t} inside the fit window")]
    NonPositive { t: f64, value: f64 },

    #[error("fit window [{start}, {end}] holds {found} samples, need at least {needed}")]
    InsufficientSamples {
        start: f64,
        end: f64,
        found: usize,
        needed: usize,
    },

    #[error("minimum-SOV eigenvector did not converge: overlap {overlap} < {required}")]
    NonConvergence { overlap: f64, required: f64 },

    #[error("estimator not applicable: {0}")]
    Inapplicable(String),

    #[error("state left the integration domain at t = {time}")]
    Divergence { time: f64 },

    #[error("all {0} realizations diverged")]
    AllDiverged(usize),
}
