//! Assumption-lean inference for linear regression.
//!
//! The projection parameter `beta = Sigma^{-1} E[XY]` is well-defined even
//! when the regression function is nonlinear. This crate fits it by ordinary
//! least squares, quantifies uncertainty with the sandwich covariance
//! estimator, and builds simultaneous confidence rectangles calibrated by
//! Bonferroni, Sidak, or a Gaussian multiplier bootstrap. A parallel pipeline
//! covers partial correlations of multivariate samples, and a simulation lab
//! checks the underlying deterministic inequalities and empirical coverage
//! by Monte Carlo.
//!
//! Everything is deterministic given a seed, including parallel code paths.

pub mod confidence;
pub mod error;
pub mod gaussian_max;
pub mod lab;
pub mod linalg;
pub mod ols;
pub mod pcor;
pub mod rng;
pub mod sandwich;

pub use error::{Error, Result};
pub use linalg::{SpectralDecomp, SymMatrix, DEFAULT_SINGULARITY_REL_TOL};
