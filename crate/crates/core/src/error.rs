use thiserror::Error;

/// Errors surfaced by realization algebra, solvers, and synthesis stages.
///
/// Infeasibility at a candidate gamma is not an error; pipelines report it
/// through their return value so bisection can continue.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state matrix is singular (sigma_min = {sigma_min:.3e}); {context}")]
    SingularStateMap { sigma_min: f64, context: String },

    #[error("matrix is singular or badly conditioned: {0}")]
    SingularMatrix(String),

    #[error("{context}: pole with modulus {modulus:.12} lies within {margin:.1e} of the unit circle")]
    PoleNearUnitCircle {
        modulus: f64,
        margin: f64,
        context: String,
    },

    #[error("operation requires a stable system: {0}")]
    NotStable(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("no stabilizing Riccati solution found after {iterations} iterations (residual {residual:.3e})")]
    NoStabilizingSolution { iterations: usize, residual: f64 },

    #[error("Hankel norm {hankel:.6} is not below the required bound {bound:.6}")]
    HankelBoundExceeded { hankel: f64, bound: f64 },

    #[error("{stage} failed: {detail}")]
    FactorizationFailed { stage: String, detail: String },

    #[error("interior-point solver broke down: {0}")]
    NumericalBreakdown(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl Error {
    pub fn dim(context: impl Into<String>) -> Self {
        Error::DimensionMismatch(context.into())
    }
}
