use thiserror::Error;

/// Failures reported by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate, flattened; its layout is documented by the caller.
        last: Vec<f64>,
    },

    /// The training set is linearly separable at λ = 0, so the unregularized
    /// logistic risk has no minimizer.
    #[error("separable regime: alpha = {alpha} is below the separability threshold {alpha_c:.4}")]
    SeparableRegime { alpha: f64, alpha_c: f64 },

    #[error("singular covariance: {0}")]
    Singular(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
