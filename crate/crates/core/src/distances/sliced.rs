//! One-dimensional, sliced and max-sliced Wasserstein distances.
//!
//! In 1D the optimal matching pairs order statistics, so `W_p^p` is a sort
//! away. Sliced Wasserstein averages `W₂²` over random unit projections;
//! max-sliced keeps the single most separating direction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_same_shape, Exponent};
use crate::error::{Error, Result};
use crate::linalg::{dot, exact_sum, Matrix};
use crate::random::unit_direction;

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Pairs of `(index in u, index in v)` matching order statistics.
fn sorted_matching(u: &[f64], v: &[f64]) -> Vec<(usize, usize)> {
    argsort(u).into_iter().zip(argsort(v)).collect()
}

/// `Σ_i |u_(i) − v_(i)|^p` over order statistics.
pub fn wasserstein_1d(u: &[f64], v: &[f64], p: Exponent) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "1D samples have different lengths: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    if u.is_empty() {
        return Err(Error::Empty);
    }
    let mut pairs = sorted_matching(u, v);
    if p == Exponent::One {
        return Ok(super::exact_abs_diff_sum(
            pairs.into_iter().map(|(i, j)| (u[i], v[j])),
        ));
    }
    // Sum in index order of `u`, matching how the assignment cost is reported.
    pairs.sort_unstable_by_key(|&(i, _)| i);
    Ok(exact_sum(pairs.into_iter().map(|(i, j)| {
        let diff = u[i] - v[j];
        diff * diff
    })))
}

/// Draws `k` unit directions in `dim` dimensions, sequentially from `rng`.
pub fn draw_directions<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..k).map(|_| unit_direction(dim, rng)).collect()
}

fn project(x: &Matrix, omega: &[f64]) -> Vec<f64> {
    x.row_iter().map(|r| dot(r, omega)).collect()
}

/// Mean over `directions` of the 1D `W₂²` between the projected sets, and its
/// gradient with respect to the rows of `y` (sorted pairing held fixed).
pub fn projected_wasserstein_with_grad(
    x: &Matrix,
    y: &Matrix,
    directions: &[Vec<f64>],
) -> Result<(f64, Matrix)> {
    check_same_shape(x, y)?;
    if directions.is_empty() {
        return Err(Error::Config(
            "need at least one projection direction".into(),
        ));
    }
    let k = directions.len() as f64;
    let mut grad = Matrix::zeros(y.rows(), y.cols());
    let mut total = 0.0;
    for omega in directions {
        if omega.len() != x.cols() {
            return Err(Error::Shape(format!(
                "direction of dimension {} for {}-dimensional samples",
                omega.len(),
                x.cols()
            )));
        }
        let px = project(x, omega);
        let py = project(y, omega);
        total += wasserstein_1d(&px, &py, Exponent::Two)?;
        for (i, j) in sorted_matching(&px, &py) {
            let coeff = 2.0 * (py[j] - px[i]) / k;
            for (g, w) in grad.row_mut(j).iter_mut().zip(omega) {
                *g += coeff * w;
            }
        }
    }
    Ok((total / k, grad))
}

/// Sliced `W₂²` over `k` random directions drawn from `rng`.
pub fn sliced_wasserstein<R: Rng + ?Sized>(
    x: &Matrix,
    y: &Matrix,
    k: usize,
    rng: &mut R,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("sliced Wasserstein needs k >= 1".into()));
    }
    check_same_shape(x, y)?;
    let directions = draw_directions(x.cols(), k, rng);
    projected_wasserstein_with_grad(x, y, &directions).map(|(v, _)| v)
}

/// Search budget for [`max_sliced_wasserstein`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSlicedConfig {
    pub k_candidates: usize,
    pub ascent_steps: usize,
}

impl Default for MaxSlicedConfig {
    fn default() -> Self {
        Self {
            k_candidates: 128,
            ascent_steps: 10,
        }
    }
}

fn directional_w2(x: &Matrix, y: &Matrix, omega: &[f64]) -> Result<f64> {
    wasserstein_1d(&project(x, omega), &project(y, omega), Exponent::Two)
}

/// Best of `k_candidates` random directions, refined by `ascent_steps` of
/// projected gradient ascent on the sphere. Returns the 1D `W₂²` along the
/// returned unit direction; steps that would lower the value are rejected,
/// so refinement never decreases the result.
pub fn max_sliced_wasserstein<R: Rng + ?Sized>(
    x: &Matrix,
    y: &Matrix,
    k_candidates: usize,
    ascent_steps: usize,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if k_candidates == 0 {
        return Err(Error::Config(
            "max-sliced Wasserstein needs k_candidates >= 1".into(),
        ));
    }
    check_same_shape(x, y)?;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for omega in draw_directions(x.cols(), k_candidates, rng) {
        let w = directional_w2(x, y, &omega)?;
        if w > best.0 {
            best = (w, omega);
        }
    }

    let (mut value, mut omega) = best;
    let mut step = 0.5;
    for _ in 0..ascent_steps {
        // ∇_ω Σ ((x_a − y_b)·ω)² with the current sorted pairing.
        let px = project(x, &omega);
        let py = project(y, &omega);
        let mut g = vec![0.0; x.cols()];
        for (i, j) in sorted_matching(&px, &py) {
            let c = 2.0 * (px[i] - py[j]);
            for ((gk, a), b) in g.iter_mut().zip(x.row(i)).zip(y.row(j)) {
                *gk += c * (a - b);
            }
        }
        let radial = dot(&g, &omega);
        for (gk, w) in g.iter_mut().zip(&omega) {
            *gk -= radial * w;
        }
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-14 * (1.0 + value.abs()) {
            break;
        }
        let mut candidate: Vec<f64> = omega
            .iter()
            .zip(&g)
            .map(|(w, gk)| w + step * gk / gnorm)
            .collect();
        let norm = dot(&candidate, &candidate).sqrt();
        candidate.iter_mut().for_each(|c| *c /= norm);
        let w = directional_w2(x, y, &candidate)?;
        if w >= value {
            value = w;
            omega = candidate;
            step = (step * 1.5).min(1.0);
        } else {
            step *= 0.5;
        }
    }
    Ok((value, omega))
}
