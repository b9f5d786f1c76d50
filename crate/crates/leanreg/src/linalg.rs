//! Symmetric-matrix kernels: eigendecomposition, inverses, square roots,
//! operator norm, condition number, covariance-to-correlation.
//!
//! Every derived operation goes through one spectral decomposition so there
//! is a single numerical code path to validate. Matrices are dense; the
//! target scale is d up to a few hundred.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a matrix is declared singular.
///
/// A symmetric PSD matrix is invertible for our purposes iff
/// `min_eig > rel_tol * max_eig`. There is no silent regularization.
pub const DEFAULT_SINGULARITY_REL_TOL: f64 = 1e-10;

/// Dense symmetric real matrix. Construction symmetrizes exactly, so
/// `get(j, k) == get(k, j)` holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Symmetrizes `a` by averaging mirrored entries. Errors if `a` is not
    /// square or is empty.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(Error::DimensionMismatch("matrix dimension must be >= 1".into()));
        }
        let mut m = a;
        for j in 0..m.nrows() {
            for k in (j + 1)..m.ncols() {
                let v = 0.5 * (m[(j, k)] + m[(k, j)]);
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { m: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) }
    }

    /// Builds from a symmetric generator: only `j <= k` is evaluated.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for k in j..dim {
                let v = f(j, k);
                m[(j, k)] = v;
                m[(k, j)] = v;
            }
        }
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.m[(j, k)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.m.diagonal()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }

    /// Eigendecomposition, eigenvalues sorted descending.
    pub fn spectral(&self) -> Result<SpectralDecomp> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        let eig = nalgebra::linalg::SymmetricEigen::new(self.m.clone());
        let d = self.dim();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Ok(SpectralDecomp { eigenvalues, eigenvectors })
    }

    /// Operator (spectral) norm: max |eigenvalue|.
    pub fn op_norm(&self) -> Result<f64> {
        let s = self.spectral()?;
        Ok(s.eigenvalues.iter().fold(0.0, |acc, v| acc.max(v.abs())))
    }

    /// A^{-1/2} for PSD `self`. Errors with `SingularMatrix` if the smallest
    /// eigenvalue is at most `rel_tol` times the largest.
    pub fn inv_sqrt(&self, rel_tol: f64) -> Result<SymMatrix> {
        let s = self.spectral()?;
        s.check_invertible(rel_tol)?;
        Ok(s.apply(|l| 1.0 / l.sqrt()))
    }

    /// A^{1/2} for PSD `self` (negative eigenvalues within roundoff clamp to 0).
    pub fn sqrt(&self) -> Result<SymMatrix> {
        let s = self.spectral()?;
        Ok(s.apply(|l| l.max(0.0).sqrt()))
    }

    /// A^{-1}, with the same singularity policy as `inv_sqrt`.
    pub fn inverse(&self, rel_tol: f64) -> Result<SymMatrix> {
        let s = self.spectral()?;
        s.check_invertible(rel_tol)?;
        Ok(s.apply(|l| 1.0 / l))
    }

    /// lambda_max / lambda_min of a positive definite matrix.
    pub fn condition_number(&self) -> Result<f64> {
        let s = self.spectral()?;
        s.check_invertible(DEFAULT_SINGULARITY_REL_TOL)?;
        let max = s.eigenvalues[0];
        let min = s.eigenvalues[s.eigenvalues.len() - 1];
        Ok(max / min)
    }

    /// Corr(A) = diag(A)^{-1/2} A diag(A)^{-1/2}, diagonal set to exactly 1.
    pub fn corr(&self) -> Result<SymMatrix> {
        let d = self.dim();
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let v = self.m[(j, j)];
            if !(v > 0.0) {
                return Err(Error::NonPositiveDiagonal { index: j, value: v });
            }
            scale.push(1.0 / v.sqrt());
        }
        Ok(SymMatrix::from_fn(d, |j, k| {
            if j == k {
                1.0
            } else {
                self.m[(j, k)] * scale[j] * scale[k]
            }
        }))
    }
}

/// Eigendecomposition of a `SymMatrix`: `A = Q diag(eigenvalues) Q^T` with
/// eigenvalues sorted descending and orthonormal `Q`.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Reassembles `Q f(lambda) Q^T` as an exactly symmetric matrix.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.dim();
        let q = &self.eigenvectors;
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(d, |j, k| {
            (0..d).map(|i| q[(j, i)] * vals[i] * q[(k, i)]).sum()
        })
    }

    fn check_invertible(&self, rel_tol: f64) -> Result<()> {
        let max = self.eigenvalues[0];
        let min = self.eigenvalues[self.eigenvalues.len() - 1];
        if !(min > rel_tol * max) || max <= 0.0 {
            return Err(Error::SingularMatrix { min_eig: min, max_eig: max });
        }
        Ok(())
    }
}

/// Operator norm of an arbitrary (not necessarily symmetric) square matrix,
/// computed as the largest singular value via A^T A.
pub fn general_op_norm(a: &DMatrix<f64>) -> Result<f64> {
    let gram = SymMatrix::new(a.transpose() * a)?;
    Ok(gram.op_norm()?.max(0.0).sqrt())
}
