//! Sandwich covariance estimator and assumption diagnostics.
//!
//! The "meat" is `V_hat = n^{-1} sum X_i X_i' r_i^2` built from fitted
//! residuals; the bread is `Sigma_hat^{-1}`. The resulting estimate of the
//! variance of `beta_hat` is `Sigma_hat^{-1} V_hat_n Sigma_hat^{-1}` with
//! `V_hat_n = V_hat / n`, which algebraically equals the outer product of
//! the score vectors, `n^{-2} sum psi_hat_i psi_hat_i'` — that identity is
//! asserted by the test suite on every fit.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lab::dgp::OracleTruth;
use crate::linalg::{SymMatrix, DEFAULT_SINGULARITY_REL_TOL};
use crate::ols::ProjectionFit;

/// Sandwich covariance pieces for one fit.
#[derive(Debug, Clone)]
pub struct SandwichCov {
    /// `V_hat = n^{-1} sum X_i X_i' r_i^2`.
    pub v_hat: SymMatrix,
    /// `V_hat_n = V_hat / n`.
    pub v_hat_n: SymMatrix,
    /// `Sigma_hat^{-1} V_hat_n Sigma_hat^{-1}`: estimated Var(beta_hat).
    pub cov: SymMatrix,
    /// Square roots of the diagonal of `cov`; all strictly positive.
    pub std_err: Vec<f64>,
}

/// Computes the sandwich covariance from a fit.
///
/// Errors with `DegenerateVariance` when some diagonal entry of the
/// covariance is not strictly positive (e.g. noiseless data): every
/// downstream confidence interval divides by these standard errors.
pub fn sandwich_cov(fit: &ProjectionFit) -> Result<SandwichCov> {
    let n = fit.n() as f64;
    let v_hat = meat_matrix(fit)?;
    let v_hat_n = SymMatrix::new(v_hat.as_matrix() / n)?;
    let bread = fit.sigma_inv().as_matrix();
    let cov = SymMatrix::new(bread * v_hat_n.as_matrix() * bread)?;

    let mut std_err = Vec::with_capacity(cov.dim());
    for j in 0..cov.dim() {
        let v = cov.get(j, j);
        if !(v > 0.0) {
            return Err(Error::DegenerateVariance { index: j, value: v });
        }
        std_err.push(v.sqrt());
    }
    Ok(SandwichCov { v_hat, v_hat_n, cov, std_err })
}

/// `n^{-2} sum psi_hat_i psi_hat_i'` — the score outer-product route to the
/// same matrix as `cov`, kept separate so tests can compare the two.
pub fn score_outer_product(fit: &ProjectionFit) -> Result<SymMatrix> {
    let n = fit.n() as f64;
    SymMatrix::new(fit.scores.transpose() * &fit.scores / (n * n))
}

/// Population sandwich `Sigma^{-1} V Sigma^{-1}` from simulation truth.
pub fn oracle_sandwich(truth: &OracleTruth) -> Result<SymMatrix> {
    let sigma_inv = truth.sigma.inverse(DEFAULT_SINGULARITY_REL_TOL)?;
    SymMatrix::new(sigma_inv.as_matrix() * truth.v.as_matrix() * sigma_inv.as_matrix())
}

/// Advisory empirical surrogates for the moment and spectrum assumptions.
/// Values only; the population constants they estimate have no canonical
/// pass/fail thresholds.
#[derive(Debug, Clone)]
pub struct AssumptionDiagnostics {
    /// `(q, n^{-1} sum |r_i|^q)` for each requested q.
    pub residual_moments: Vec<(f64, f64)>,
    /// Eigenvalue range of `Sigma_hat^{1/2} V_hat^{-1} Sigma_hat^{1/2}`.
    pub sigma_v_eig_range: (f64, f64),
    /// `kappa(Sigma_hat^{-1/2} V_hat^{1/2})`.
    pub kappa_hat: f64,
}

/// Computes the diagnostics report. Errors with `SingularMatrix` if `V_hat`
/// is not invertible.
pub fn assumption_diagnostics(fit: &ProjectionFit, q_grid: &[f64]) -> Result<AssumptionDiagnostics> {
    let n = fit.n() as f64;
    let residual_moments = q_grid
        .iter()
        .map(|&q| (q, fit.residuals.iter().map(|r| r.abs().powf(q)).sum::<f64>() / n))
        .collect();

    let v_hat = meat_matrix(fit)?;
    let v_inv = v_hat.inverse(DEFAULT_SINGULARITY_REL_TOL)?;
    let sqrt_sigma = fit.sigma_hat.sqrt()?;
    let w = SymMatrix::new(sqrt_sigma.as_matrix() * v_inv.as_matrix() * sqrt_sigma.as_matrix())?;
    let spec = w.spectral()?;
    let max = spec.eigenvalues[0];
    let min = spec.eigenvalues[spec.eigenvalues.len() - 1];
    // kappa(Sigma^{-1/2} V^{1/2})^2 = cond(Sigma^{-1/2} V Sigma^{-1/2}), and
    // W is the inverse of that matrix, so the condition number carries over.
    let kappa_hat = (max / min).sqrt();

    Ok(AssumptionDiagnostics {
        residual_moments,
        sigma_v_eig_range: (min, max),
        kappa_hat,
    })
}

fn meat_matrix(fit: &ProjectionFit) -> Result<SymMatrix> {
    let n = fit.n() as f64;
    // V_hat = M'M/n with M = diag(r) X.
    let mut m: DMatrix<f64> = fit.design().clone_owned();
    for i in 0..m.nrows() {
        let r = fit.residuals[i];
        m.row_mut(i).scale_mut(r);
    }
    SymMatrix::new(m.transpose() * &m / n)
}
