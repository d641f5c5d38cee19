//! Gaussian moment estimation for feature batches.

use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, matmul_tn, sym_eig_default, Matrix, Vector};
use crate::matsqrt::PSD_TOL;

/// Mean and covariance summarizing a batch of `d`-dimensional samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vector,
    pub cov: Matrix,
}

impl GaussianStats {
    /// Builds stats from known parameters, checking dimensions, symmetry
    /// and positive semi-definiteness.
    pub fn new(mean: Vector, cov: Matrix) -> Result<Self> {
        let stats = Self { mean, cov };
        stats.validate()?;
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Smallest covariance eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = sym_eig_default(&self.cov)?;
        Ok(e.eigenvalues.as_slice().first().copied().unwrap_or(0.0))
    }

    /// Checks the symmetric-PSD invariants of the covariance.
    pub fn validate(&self) -> Result<()> {
        let d = self.mean.dim();
        if self.cov.dims() != (d, d) {
            return Err(Error::Shape(format!(
                "covariance {:?} does not match mean of dimension {d}",
                self.cov.dims()
            )));
        }
        let norm = frobenius_norm(&self.cov);
        if self.cov.asymmetry() > 1e-12 * norm {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let min = self.min_eigenvalue()?;
        if min < -PSD_TOL * norm {
            return Err(Error::NotPsd {
                eigenvalue: min,
                tolerance: PSD_TOL * norm,
            });
        }
        Ok(())
    }
}

/// Column means of an `N×d` sample matrix.
pub fn column_means(samples: &Matrix) -> Vec<f64> {
    let (n, d) = samples.dims();
    let mut mean = vec![0.0; d];
    for row in samples.row_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    mean
}

/// Rows minus their column means.
pub fn center(samples: &Matrix, mean: &[f64]) -> Matrix {
    let mut centered = samples.clone();
    for i in 0..samples.rows() {
        for (v, m) in centered.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    centered
}

/// Sample mean and unbiased covariance `XcᵀXc / (N − 1)` of the rows of
/// `samples`, symmetrized as `(C + Cᵀ)/2`.
pub fn estimate_gaussian(samples: &Matrix) -> Result<GaussianStats> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !samples.all_finite() {
        return Err(Error::Domain("samples contain non-finite entries".into()));
    }
    let mean = column_means(samples);
    let centered = center(samples, &mean);
    let cov = matmul_tn(&centered, &centered)?
        .scale(1.0 / (n as f64 - 1.0))
        .symmetrize();
    Ok(GaussianStats {
        mean: Vector::from(mean),
        cov,
    })
}
