//! Distributional distances between a real and a generated sample set, with
//! gradients with respect to the generated rows.
//!
//! * [`frechet`]: closed-form W₂ between Gaussian fits of the two sets.
//! * [`ot`]: exact optimal transport (linear-sum assignment).
//! * [`sliced`]: sliced and max-sliced Wasserstein over 1D projections.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub mod frechet;
pub mod ot;
pub mod sliced;

pub use frechet::{frechet_distance, frechet_grad, FrechetConfig, FrechetForward};
pub use ot::{hungarian, ot_cost, ot_grad, pairwise_cost};
pub use sliced::{
    draw_directions, max_sliced_wasserstein, projected_wasserstein_with_grad, sliced_wasserstein,
    wasserstein_1d, MaxSlicedConfig,
};

/// Ground-cost exponent `p` in `‖x − y‖^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Exponent {
    One,
    #[default]
    Two,
}

impl Exponent {
    /// `‖x − y‖^p` from the squared distance.
    #[inline]
    pub fn apply(self, dist_sq: f64) -> f64 {
        match self {
            Exponent::One => dist_sq.sqrt(),
            Exponent::Two => dist_sq,
        }
    }
}

impl TryFrom<u32> for Exponent {
    type Error = Error;

    fn try_from(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Exponent::One),
            2 => Ok(Exponent::Two),
            other => Err(Error::Config(format!(
                "exponent p must be 1 or 2, got {other}"
            ))),
        }
    }
}

impl From<Exponent> for u32 {
    fn from(p: Exponent) -> u32 {
        match p {
            Exponent::One => 1,
            Exponent::Two => 2,
        }
    }
}

/// A bijection matching real sample `i` to generated sample `perm[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    perm: Vec<usize>,
}

impl Assignment {
    /// Validates that `perm` is a permutation of `0..perm.len()`.
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &j in &perm {
            if j >= perm.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Domain(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    /// `inv[j] = i` such that `perm[i] = j`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }
}

/// A distance value with an optional gradient with respect to the generated
/// rows and the time it took to compute.
#[derive(Debug, Clone)]
pub struct DistanceReport {
    pub value: f64,
    pub grad: Option<Matrix>,
    pub elapsed: Duration,
}

/// Correctly rounded `Σ |a − b|` over pairs, summed from the values
/// themselves instead of their rounded differences. In 1D with `p = 1` every
/// optimal matching attains the same exact total, so this value does not
/// depend on which optimum a solver returns.
pub(crate) fn exact_abs_diff_sum(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    crate::linalg::exact_sum(
        pairs
            .into_iter()
            .flat_map(|(a, b)| if a >= b { [a, -b] } else { [b, -a] }),
    )
}

pub(crate) fn check_same_width(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.cols() != y.cols() {
        return Err(Error::Shape(format!(
            "sample sets have different widths: {} vs {}",
            x.cols(),
            y.cols()
        )));
    }
    Ok(())
}

pub(crate) fn check_same_shape(x: &Matrix, y: &Matrix) -> Result<()> {
    check_same_width(x, y)?;
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "sample sets have different sizes: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::Empty);
    }
    Ok(())
}
