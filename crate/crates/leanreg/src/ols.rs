//! Ordinary least squares for the projection parameter.
//!
//! Fits `beta_hat = Sigma_hat^{-1} Gamma_hat` where `Sigma_hat = X'X/n` and
//! `Gamma_hat = X'y/n`, and exposes the estimated score (influence) vectors
//! `psi_hat_i = Sigma_hat^{-1} X_i r_i` that drive both the sandwich
//! covariance and the multiplier bootstrap. The normal equations are solved
//! through the spectral decomposition of `Sigma_hat` because its inverse and
//! inverse square root are needed downstream anyway.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lab::dgp::OracleTruth;
use crate::linalg::{SymMatrix, DEFAULT_SINGULARITY_REL_TOL};

/// Covariate matrix plus response. When `intercept` is set, column 0 is
/// exactly all ones; downstream code never special-cases it.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    intercept: bool,
}

impl Dataset {
    /// Wraps a design matrix as-is (no intercept column is added).
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::from_parts(x, y, false)
    }

    /// Prepends an all-ones intercept column to `raw_x`. `raw_x` may have
    /// zero columns (intercept-only model).
    pub fn with_intercept(raw_x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = raw_x.nrows();
        let mut x = DMatrix::zeros(n, raw_x.ncols() + 1);
        x.column_mut(0).fill(1.0);
        for j in 0..raw_x.ncols() {
            x.set_column(j + 1, &raw_x.column(j));
        }
        Self::from_parts(x, y, true)
    }

    /// Validating constructor. `intercept` asserts that column 0 is all ones.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>, intercept: bool) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "response length {} does not match {} rows",
                y.len(),
                n
            )));
        }
        if d < 1 || n < d {
            return Err(Error::DimensionMismatch(format!(
                "need n >= d >= 1, got n={n}, d={d}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if intercept && x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::DimensionMismatch(
                "intercept flag set but column 0 is not all ones".into(),
            ));
        }
        Ok(Self { x, y, intercept })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }
}

/// OLS fit: estimator, moment matrices, residuals, and score vectors.
#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub beta_hat: DVector<f64>,
    /// Gram matrix `Sigma_hat = X'X/n`.
    pub sigma_hat: SymMatrix,
    /// Cross moment `Gamma_hat = X'y/n`.
    pub gamma_hat: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Row i is `psi_hat_i = Sigma_hat^{-1} X_i r_i`.
    pub scores: DMatrix<f64>,
    /// Cached `Sigma_hat^{-1}` (from the same spectral decomposition that
    /// solved the normal equations).
    sigma_inv: SymMatrix,
    /// The design matrix; the sandwich meat needs the raw rows.
    x: DMatrix<f64>,
}

impl ProjectionFit {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.beta_hat.len()
    }

    pub fn sigma_inv(&self) -> &SymMatrix {
        &self.sigma_inv
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.x
    }
}

/// Fits the projection parameter by OLS.
///
/// Errors with `SingularGram` when `Sigma_hat` fails the relative eigenvalue
/// threshold; nothing is regularized.
pub fn fit(data: &Dataset) -> Result<ProjectionFit> {
    let n = data.n();
    let nf = n as f64;
    let x = data.x();

    let sigma_hat = SymMatrix::new(x.transpose() * x / nf)?;
    let gamma_hat = x.transpose() * data.y() / nf;

    let sigma_inv = sigma_hat.inverse(DEFAULT_SINGULARITY_REL_TOL).map_err(|e| match e {
        Error::SingularMatrix { min_eig, max_eig } => Error::SingularGram { min_eig, max_eig },
        other => other,
    })?;

    let beta_hat = sigma_inv.as_matrix() * &gamma_hat;
    let residuals = data.y() - x * &beta_hat;
    let scores = score_matrix(x, &residuals, &sigma_inv);

    Ok(ProjectionFit {
        beta_hat,
        sigma_hat,
        gamma_hat,
        residuals,
        scores,
        sigma_inv,
        x: x.clone_owned(),
    })
}

/// Score vectors under the *true* `beta` and `Sigma` of a simulation:
/// row i is `Sigma^{-1} X_i (Y_i - X_i' beta)`. Simulation-only.
pub fn oracle_scores(data: &Dataset, truth: &OracleTruth) -> Result<DMatrix<f64>> {
    if truth.beta.len() != data.d() || truth.sigma.dim() != data.d() {
        return Err(Error::DimensionMismatch(format!(
            "truth dimension {} does not match data dimension {}",
            truth.beta.len(),
            data.d()
        )));
    }
    let sigma_inv = truth.sigma.inverse(DEFAULT_SINGULARITY_REL_TOL)?;
    let residuals = data.y() - data.x() * &truth.beta;
    Ok(score_matrix(data.x(), &residuals, &sigma_inv))
}

fn score_matrix(x: &DMatrix<f64>, residuals: &DVector<f64>, sigma_inv: &SymMatrix) -> DMatrix<f64> {
    let mut scores = x * sigma_inv.as_matrix();
    for i in 0..scores.nrows() {
        let r = residuals[i];
        scores.row_mut(i).scale_mut(r);
    }
    scores
}
