//! Error type shared across the crate.

use thiserror::Error;

/// All failure modes surfaced by the numerical routines.
///
/// Singularity-style errors are deliberate refusals: the estimators here
/// require invertible moment matrices and we never regularize silently.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// A matrix contained NaN or infinite entries.
    #[error("matrix has non-finite entries")]
    NonFinite,

    /// A symmetric matrix failed the relative eigenvalue threshold for inversion.
    #[error("matrix is singular or indefinite (min eigenvalue {min_eig:.3e}, max {max_eig:.3e})")]
    SingularMatrix { min_eig: f64, max_eig: f64 },

    /// The empirical Gram matrix of the design is numerically singular.
    #[error("Gram matrix is numerically singular (min eigenvalue {min_eig:.3e}, max {max_eig:.3e})")]
    SingularGram { min_eig: f64, max_eig: f64 },

    /// The centered sample covariance is numerically singular.
    #[error("sample covariance is numerically singular (min eigenvalue {min_eig:.3e}, max {max_eig:.3e})")]
    SingularCovariance { min_eig: f64, max_eig: f64 },

    /// Correlation-like matrix has a non-positive diagonal entry.
    #[error("diagonal entry {index} is not strictly positive ({value:.3e})")]
    NonPositiveDiagonal { index: usize, value: f64 },

    /// A correlation matrix supplied for Gaussian sampling is not PSD.
    #[error("correlation matrix is not positive semi-definite (min eigenvalue {min_eig:.3e})")]
    NonPsdCorrelation { min_eig: f64 },

    /// Sandwich covariance has a non-positive diagonal entry, so standard
    /// errors are undefined (e.g. noiseless data).
    #[error("sandwich covariance is degenerate in coordinate {index} (diagonal {value:.3e})")]
    DegenerateVariance { index: usize, value: f64 },

    /// A partial-correlation studentizer is zero.
    #[error("studentizer for pair ({j}, {k}) is zero")]
    DegenerateStudentizer { j: usize, k: usize },

    /// Matrix/vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Confidence level outside (0, 1).
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    /// A simulation specification failed validation.
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),

    /// Generic precondition failure on a scalar parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A sample-dependent precondition of a verification routine failed;
    /// the caller should skip (and count) this replicate.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// An empty sample was passed where at least one value is required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
