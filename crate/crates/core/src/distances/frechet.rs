//! Fréchet distance between Gaussian fits of two sample sets, and its exact
//! gradient with respect to the generated samples.
//!
//! ```text
//! FD = ‖μ_d − μ_g‖² + tr(Σ_d + Σ_g − 2 (Σ_d^{1/2} Σ_g Σ_d^{1/2})^{1/2})
//! ```
//!
//! The cross term is evaluated in the symmetric form above, which has the
//! same trace as `(Σ_d Σ_g)^{1/2}` but keeps every square root inside the
//! symmetric PSD domain. The backward pass differentiates through the sample
//! mean, the unbiased covariance and the matrix square root; the last step is
//! a Sylvester solve in the eigenbasis of the forward square root.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::DistanceReport;
use crate::error::{Error, Result};
use crate::linalg::{matmul, trace, Matrix};
use crate::matsqrt::{SqrtMethod, SylvesterSolver};
use crate::stats::{center, column_means, GaussianStats};

/// Values within this band below zero (scaled by the problem magnitude) are
/// treated as roundoff and clamped to 0.
pub const NEGATIVE_CLAMP_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrechetConfig {
    pub sqrt: SqrtMethod,
}

impl FrechetConfig {
    pub fn eig() -> Self {
        Self {
            sqrt: SqrtMethod::Eig,
        }
    }

    pub fn newton_schulz(iterations: usize) -> Self {
        Self {
            sqrt: SqrtMethod::newton_schulz(iterations),
        }
    }
}

struct CrossTerm {
    sqrt_d: Matrix,
    root: Matrix,
}

fn cross_term(cov_d: &Matrix, cov_g: &Matrix, cfg: &FrechetConfig) -> Result<CrossTerm> {
    let sqrt_d = cfg.sqrt.sqrt(cov_d)?;
    let inner = matmul(&matmul(&sqrt_d, cov_g)?, &sqrt_d)?.symmetrize();
    let root = cfg.sqrt.sqrt(&inner)?;
    Ok(CrossTerm { sqrt_d, root })
}

fn assemble(
    mean_d: &[f64],
    mean_g: &[f64],
    cov_d: &Matrix,
    cov_g: &Matrix,
    root: &Matrix,
) -> Result<f64> {
    let mean_term: f64 = mean_d
        .iter()
        .zip(mean_g)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let tr_d = trace(cov_d)?;
    let tr_g = trace(cov_g)?;
    let value = mean_term + tr_d + tr_g - 2.0 * trace(root)?;
    let band = NEGATIVE_CLAMP_BAND * (mean_term + tr_d + tr_g).max(1.0);
    if value >= 0.0 {
        Ok(value)
    } else if value >= -band {
        Ok(0.0)
    } else {
        Err(Error::Domain(format!(
            "Fréchet distance evaluated to {value:e}, below the roundoff band"
        )))
    }
}

fn check_dims(pd: &GaussianStats, pg: &GaussianStats) -> Result<()> {
    if pd.dim() != pg.dim() {
        return Err(Error::Shape(format!(
            "Gaussians of dimension {} and {}",
            pd.dim(),
            pg.dim()
        )));
    }
    Ok(())
}

/// Fréchet distance between two Gaussians.
pub fn frechet_distance(
    pd: &GaussianStats,
    pg: &GaussianStats,
    cfg: &FrechetConfig,
) -> Result<f64> {
    check_dims(pd, pg)?;
    pd.validate()?;
    pg.validate()?;
    let ct = cross_term(&pd.cov, &pg.cov, cfg)?;
    assemble(
        pd.mean.as_slice(),
        pg.mean.as_slice(),
        &pd.cov,
        &pg.cov,
        &ct.root,
    )
}

/// Forward pass of the Fréchet distance from a reference Gaussian to the
/// Gaussian fit of a generated batch, keeping what the backward pass needs.
#[derive(Debug, Clone)]
pub struct FrechetForward {
    pub value: f64,
    pub stats_g: GaussianStats,
    mean_d: Vec<f64>,
    centered_g: Matrix,
    sqrt_d: Matrix,
    root: Matrix,
}

impl FrechetForward {
    pub fn new(feat_g: &Matrix, pd: &GaussianStats, cfg: &FrechetConfig) -> Result<Self> {
        let n = feat_g.rows();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        if feat_g.cols() != pd.dim() {
            return Err(Error::Shape(format!(
                "features of width {} against a {}-dimensional Gaussian",
                feat_g.cols(),
                pd.dim()
            )));
        }
        if !feat_g.all_finite() {
            return Err(Error::Domain("features contain non-finite entries".into()));
        }
        let mean_g = column_means(feat_g);
        let centered_g = center(feat_g, &mean_g);
        let cov_g = crate::linalg::matmul_tn(&centered_g, &centered_g)?
            .scale(1.0 / (n as f64 - 1.0))
            .symmetrize();
        let ct = cross_term(&pd.cov, &cov_g, cfg)?;
        let value = assemble(pd.mean.as_slice(), &mean_g, &pd.cov, &cov_g, &ct.root)?;
        Ok(Self {
            value,
            stats_g: GaussianStats {
                mean: mean_g.into(),
                cov: cov_g,
            },
            mean_d: pd.mean.as_slice().to_vec(),
            centered_g,
            sqrt_d: ct.sqrt_d,
            root: ct.root,
        })
    }

    /// `∂FD/∂feat_g`, an `N×d` matrix.
    pub fn backward(&self) -> Result<Matrix> {
        let (n, d) = self.centered_g.dims();
        // ∂FD/∂Σ_g = I − 2 S L⁻¹(I) S, where L(X) = XB + BX for B the root
        // of S Σ_g S.
        let solver = SylvesterSolver::new(&self.root)?;
        let adj = solver.solve(&Matrix::identity(d))?;
        let mut grad_cov = matmul(&matmul(&self.sqrt_d, &adj)?, &self.sqrt_d)?.scale(-2.0);
        grad_cov.add_diag(1.0);
        let grad_cov = grad_cov.symmetrize();

        let mut grad = matmul(&self.centered_g, &grad_cov)?.scale(2.0 / (n as f64 - 1.0));
        let mean_g = self.stats_g.mean.as_slice();
        let mean_grad: Vec<f64> = mean_g
            .iter()
            .zip(&self.mean_d)
            .map(|(g, r)| 2.0 * (g - r) / n as f64)
            .collect();
        for i in 0..n {
            for (v, m) in grad.row_mut(i).iter_mut().zip(&mean_grad) {
                *v += m;
            }
        }
        Ok(grad)
    }
}

/// Fréchet distance from `pd` to the Gaussian fit of `feat_g`, with its
/// gradient with respect to every entry of `feat_g`.
pub fn frechet_grad(
    feat_g: &Matrix,
    pd: &GaussianStats,
    cfg: &FrechetConfig,
) -> Result<DistanceReport> {
    let start = Instant::now();
    let forward = FrechetForward::new(feat_g, pd, cfg)?;
    let grad = forward.backward()?;
    Ok(DistanceReport {
        value: forward.value,
        grad: Some(grad),
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::random::{random_matrix, random_psd};
    use crate::stats::estimate_gaussian;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(mean: &[f64], cov: Matrix) -> GaussianStats {
        GaussianStats::new(Vector::new(mean.to_vec()).unwrap(), cov).unwrap()
    }

    fn configs() -> [FrechetConfig; 2] {
        [FrechetConfig::eig(), FrechetConfig::newton_schulz(15)]
    }

    #[test]
    fn analytic_cases() {
        for cfg in configs() {
            let p = gaussian(
                &[1.0, 2.0],
                Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]]).unwrap(),
            );
            assert!(frechet_distance(&p, &p, &cfg).unwrap().abs() <= 1e-8);

            let a = gaussian(&[0.0], Matrix::from_diag(&[1.0]));
            let b = gaussian(&[1.0], Matrix::from_diag(&[4.0]));
            assert!((frechet_distance(&a, &b, &cfg).unwrap() - 2.0).abs() <= 1e-8);

            let a = gaussian(&[0.0, 0.0], Matrix::identity(2));
            let b = gaussian(&[1.0, 0.0], Matrix::from_diag(&[4.0, 9.0]));
            assert!((frechet_distance(&a, &b, &cfg).unwrap() - 6.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let a = gaussian(&[0.0], Matrix::identity(1));
        let b = gaussian(&[0.0, 0.0], Matrix::identity(2));
        assert!(matches!(
            frechet_distance(&a, &b, &FrechetConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn near_reference_mean_gives_small_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let pd = gaussian(&[0.5, -1.0, 2.0], random_psd(3, 0.5, 2.0, &mut rng));
        let noise = random_matrix(256, 3, &mut rng).scale(1e-4);
        let feat = Matrix::from_fn(256, 3, |i, j| pd.mean[j] + noise[(i, j)]);
        let fwd = FrechetForward::new(&feat, &pd, &FrechetConfig::eig()).unwrap();
        let tr = trace(&pd.cov).unwrap();
        assert!((fwd.value - tr).abs() <= 1e-2 * tr);
        // The value is flat in the mean near μ_d; only the covariance pull remains,
        // which scales with the tiny spread of the samples.
        let g = fwd.backward().unwrap();
        let gmax = g.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(gmax < 0.1, "gradient max {gmax}");
    }

    fn fd_check(feat: &Matrix, pd: &GaussianStats, cfg: &FrechetConfig, tol: f64) {
        let report = frechet_grad(feat, pd, cfg).unwrap();
        let g = report.grad.unwrap();
        let h = 1e-5;
        let value = |m: &Matrix| {
            FrechetForward::new(m, pd, &FrechetConfig::eig())
                .unwrap()
                .value
        };
        for i in 0..feat.rows() {
            for j in 0..feat.cols() {
                let mut plus = feat.clone();
                plus[(i, j)] += h;
                let mut minus = feat.clone();
                minus[(i, j)] -= h;
                let fd = (value(&plus) - value(&minus)) / (2.0 * h);
                let an = g[(i, j)];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(rel <= tol, "entry ({i},{j}): fd {fd} vs analytic {an}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let real = random_matrix(40, 4, &mut rng);
        let pd = estimate_gaussian(&real).unwrap();
        let feat = random_matrix(16, 4, &mut rng).map(|v| 1.3 * v + 0.2);
        fd_check(&feat, &pd, &FrechetConfig::newton_schulz(15), 1e-3);
        fd_check(&feat, &pd, &FrechetConfig::eig(), 1e-4);
    }

    #[test]
    fn translation_changes_only_mean_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let pd = estimate_gaussian(&random_matrix(30, 3, &mut rng)).unwrap();
        let feat = random_matrix(12, 3, &mut rng);
        let c = [0.7, -0.2, 1.1];
        let shifted = Matrix::from_fn(12, 3, |i, j| feat[(i, j)] + c[j]);
        let cfg = FrechetConfig::eig();
        let g0 = frechet_grad(&feat, &pd, &cfg).unwrap().grad.unwrap();
        let g1 = frechet_grad(&shifted, &pd, &cfg).unwrap().grad.unwrap();
        for i in 0..12 {
            for j in 0..3 {
                let expected = 2.0 * c[j] / 12.0;
                assert!((g1[(i, j)] - g0[(i, j)] - expected).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn insufficient_samples() {
        let pd = gaussian(&[0.0], Matrix::identity(1));
        let one = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            frechet_grad(&one, &pd, &FrechetConfig::default()),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn symmetric_and_nonnegative(seed in any::<u64>(), d in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = gaussian(&random_matrix(1, d, &mut rng).into_vec(), random_psd(d, 0.1, 4.0, &mut rng));
            let b = gaussian(&random_matrix(1, d, &mut rng).into_vec(), random_psd(d, 0.1, 4.0, &mut rng));
            for cfg in configs() {
                let ab = frechet_distance(&a, &b, &cfg).unwrap();
                let ba = frechet_distance(&b, &a, &cfg).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert!((ab - ba).abs() <= 1e-8 * ab.max(1.0));
                prop_assert!(frechet_distance(&a, &a, &cfg).unwrap() <= 1e-8);
            }
        }

        #[test]
        fn cross_trace_is_role_symmetric(seed in any::<u64>(), d in 1usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s1 = random_psd(d, 0.05, 5.0, &mut rng);
            let s2 = random_psd(d, 0.05, 5.0, &mut rng);
            let cfg = FrechetConfig::eig();
            let t12 = trace(&cross_term(&s1, &s2, &cfg).unwrap().root).unwrap();
            let t21 = trace(&cross_term(&s2, &s1, &cfg).unwrap().root).unwrap();
            prop_assert!((t12 - t21).abs() <= 1e-8 * t12.abs());
        }
    }
}
