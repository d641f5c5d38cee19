//! Seeded synthetic 2D datasets and the latent prior.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_Z_DIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Gaussians8,
    Gaussians25,
    Swissroll,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussians8" => Ok(Self::Gaussians8),
            "gaussians25" => Ok(Self::Gaussians25),
            "swissroll" => Ok(Self::Swissroll),
            other => Err(Error::Config(format!(
                "unknown dataset `{other}` (expected gaussians8, gaussians25 or swissroll)"
            ))),
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gaussians8 => "gaussians8",
            Self::Gaussians25 => "gaussians25",
            Self::Swissroll => "swissroll",
        })
    }
}

/// Which synthetic distribution to draw from. `scale` is the circle radius
/// for `gaussians8`, the grid spacing for `gaussians25` and the outer radius
/// of the spiral for `swissroll`. Fields missing from serialized input take
/// the defaults of their kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PartialSpec")]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub noise_std: f64,
    pub scale: f64,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialSpec {
    kind: DatasetKind,
    noise_std: Option<f64>,
    scale: Option<f64>,
    seed: Option<u64>,
}

impl From<PartialSpec> for DatasetSpec {
    fn from(p: PartialSpec) -> Self {
        let d = DatasetSpec::new(p.kind);
        Self {
            kind: p.kind,
            noise_std: p.noise_std.unwrap_or(d.noise_std),
            scale: p.scale.unwrap_or(d.scale),
            seed: p.seed.unwrap_or(d.seed),
        }
    }
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind) -> Self {
        let (noise_std, scale) = match kind {
            DatasetKind::Gaussians8 => (0.02, 2.0),
            DatasetKind::Gaussians25 => (0.05, 2.0),
            DatasetKind::Swissroll => (0.05, 2.0),
        };
        Self {
            kind,
            noise_std,
            scale,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be > 0, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    /// Generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Mode centers of the mixture datasets; empty for `swissroll`.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        match self.kind {
            DatasetKind::Gaussians8 => (0..8)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / 8.0;
                    [self.scale * a.cos(), self.scale * a.sin()]
                })
                .collect(),
            DatasetKind::Gaussians25 => (0..25)
                .map(|k| {
                    let (i, j) = ((k / 5) as f64 - 2.0, (k % 5) as f64 - 2.0);
                    [self.scale * i, self.scale * j]
                })
                .collect(),
            DatasetKind::Swissroll => Vec::new(),
        }
    }
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::new(DatasetKind::Gaussians8)
    }
}

fn noise_dist(spec: &DatasetSpec) -> Result<Normal<f64>> {
    Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))
}

fn swissroll_point<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> [f64; 2] {
    let t = rng.random_range(1.5 * PI..4.5 * PI);
    let r = spec.scale / (4.5 * PI);
    [r * t * t.cos(), r * t * t.sin()]
}

fn sample_with<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    n: usize,
    rng: &mut R,
    mut mode: impl FnMut(usize, &mut R) -> usize,
) -> Result<Matrix> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty);
    }
    let noise = noise_dist(spec)?;
    let centers = spec.centers();
    let mut data = Vec::with_capacity(2 * n);
    for i in 0..n {
        let base = if centers.is_empty() {
            swissroll_point(spec, rng)
        } else {
            centers[mode(i, rng)]
        };
        for c in base {
            data.push(c + noise.sample(rng));
        }
    }
    Matrix::from_vec(n, 2, data)
}

/// `n` i.i.d. points; mixture modes are chosen uniformly.
pub fn sample_real<R: Rng + ?Sized>(spec: &DatasetSpec, n: usize, rng: &mut R) -> Result<Matrix> {
    let modes = spec.centers().len();
    sample_with(spec, n, rng, |_, r| r.random_range(0..modes.max(1)))
}

/// Like [`sample_real`] but sample `i` comes from mode `i mod modes`.
pub fn sample_real_stratified<R: Rng + ?Sized>(
    spec: &DatasetSpec,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    let modes = spec.centers().len().max(1);
    sample_with(spec, n, rng, |i, _| i % modes)
}

/// `n × z_dim` standard normal latent codes.
pub fn sample_prior<R: Rng + ?Sized>(z_dim: usize, n: usize, rng: &mut R) -> Result<Matrix> {
    if z_dim == 0 {
        return Err(Error::Config("z_dim must be >= 1".into()));
    }
    Ok(Matrix::from_fn(n, z_dim, |_, _| StandardNormal.sample(rng)))
}

/// Writes 2-column samples as CSV with header `x,y`.
pub fn write_points_csv(path: &Path, samples: &Matrix) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y"])?;
    for row in samples.row_iter() {
        w.serialize((row[0], row[1]))?;
    }
    w.flush()
}
