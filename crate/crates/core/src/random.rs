//! Seeded random matrix generators shared by diagnostics, benchmarks and tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::linalg::{dot, Matrix};

/// Matrix with i.i.d. standard normal entries.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Symmetric matrix `(G + Gᵀ)/2` with standard normal `G`.
pub fn random_symmetric<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    random_matrix(n, n, rng).symmetrize()
}

/// Haar-ish random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let g = random_matrix(n, n, rng);
    // Orthonormalize the rows, re-orthogonalizing once for stability.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = g.row(i).to_vec();
        for _ in 0..2 {
            for u in &rows {
                let c = dot(&v, u);
                for (vk, uk) in v.iter_mut().zip(u) {
                    *vk -= c * uk;
                }
            }
        }
        let norm = dot(&v, &v).sqrt();
        for vk in &mut v {
            *vk /= norm;
        }
        rows.push(v);
    }
    Matrix::from_rows(&rows).expect("rows have equal length")
}

/// Symmetric PSD matrix `Q diag(λ) Qᵀ` with eigenvalues drawn uniformly from
/// `[lo, hi]` and a random orthogonal `Q`.
pub fn random_psd<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Matrix {
    let dist = Uniform::new_inclusive(lo, hi).expect("lo <= hi");
    let eigenvalues: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    psd_with_spectrum(&eigenvalues, rng)
}

/// Symmetric matrix with the given spectrum in a random orthonormal basis.
pub fn psd_with_spectrum<R: Rng + ?Sized>(eigenvalues: &[f64], rng: &mut R) -> Matrix {
    let n = eigenvalues.len();
    let q = random_orthogonal(n, rng);
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for (k, &l) in eigenvalues.iter().enumerate() {
                s += q[(k, i)] * l * q[(k, j)];
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// Uniform random direction on the unit sphere in `dim` dimensions.
pub fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
