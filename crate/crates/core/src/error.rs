use thiserror::Error;

use crate::spectral::WaveVector;

#[derive(Debug, Error)]
pub enum DynamoError {
    #[error("grid of {m} points per axis aliases resolution N={n} (need at least {})", 2 * n + 1)]
    Aliasing { m: usize, n: usize },

    #[error("wavevector {k} lies outside the resolved cube |k|_inf <= {n}")]
    OutOfRange { k: WaveVector, n: usize },

    #[error("resolution mismatch: expected N={expected}, got N={got}")]
    ResolutionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("overlapping flow intervals: [{a0}, {a1}] and [{b0}, {b1}]")]
    OverlappingSegments { a0: f64, a1: f64, b0: f64, b1: f64 },

    #[error("solver blew up at t={t} (step {step}, max |b_hat| = {max_abs})")]
    NonFinite { t: f64, step: usize, max_abs: f64 },

    #[error("internal contradiction: {0}")]
    Contradiction(String),

    #[error("control selection failed at kappa={kappa}: projections {proj1:e} (W_+R) and {proj2:e} (W_-R) are below tolerance {tol:e}")]
    ControlSelection { kappa: f64, proj1: f64, proj2: f64, tol: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("transitive scan exhausted; largest unit-mode coefficient reached {best:e} (tolerance {tol:e})")]
    TransitiveExhausted { best: f64, tol: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DynamoError>;
