use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("thrust compensation singular: attitude at or beyond 90 degrees")]
    SingularCompensation,

    #[error("QP Hessian is not positive definite")]
    QpNotPositiveDefinite,

    #[error("QP active-set iteration cap ({iterations}) exceeded")]
    QpMaxIterations {
        iterations: usize,
        /// Best feasible iterate found before giving up.
        best: Vec<f64>,
    },

    #[error("Riccati iteration did not converge within {iterations} iterations")]
    RiccatiNoConvergence { iterations: usize },

    #[error("implicit integrator Newton iteration did not converge (residual {residual})")]
    NewtonNoConvergence { residual: f64 },

    #[error("innovation covariance not invertible")]
    SingularInnovation,

    #[error("model validity violated at t = {t} s: |phi| = {phi}, |theta| = {theta} (limit pi/2)")]
    ModelValidity { t: f64, phi: f64, theta: f64 },

    #[error("scenario config error: {0}")]
    Config(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
