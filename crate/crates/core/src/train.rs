//! Adversarial training where the discriminator is fit with cross-entropy and
//! the generator minimizes a distributional distance in the discriminator's
//! feature space.
//!
//! The two objectives are optimized independently: the discriminator update
//! only ever sees its cross-entropy loss, and the generator update holds the
//! freshly updated discriminator fixed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_prior, sample_real, DatasetSpec, DEFAULT_Z_DIM};
use crate::distances::{
    draw_directions, max_sliced_wasserstein, ot_cost, ot_grad, projected_wasserstein_with_grad,
    Exponent, FrechetConfig, FrechetForward, MaxSlicedConfig,
};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig_default, Matrix};
use crate::matsqrt::SqrtMethod;
use crate::nn::{
    bce_discriminator_loss, clamp_probabilities, Activation, AdamHyper, MlpCheckpoint, MlpGrads,
    MlpParams, Optimizer, OptimizerConfig, PROB_EPS,
};
use crate::stats::estimate_gaussian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenLoss {
    Frechet,
    Ot,
    Swg,
    MaxSwg,
}

impl std::str::FromStr for GenLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frechet" => Ok(Self::Frechet),
            "ot" => Ok(Self::Ot),
            "swg" => Ok(Self::Swg),
            "max_swg" | "max-swg" => Ok(Self::MaxSwg),
            other => Err(Error::Config(format!(
                "unknown generator loss `{other}` (expected frechet, ot, swg or max_swg)"
            ))),
        }
    }
}

impl std::fmt::Display for GenLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Frechet => "frechet",
            Self::Ot => "ot",
            Self::Swg => "swg",
            Self::MaxSwg => "max_swg",
        })
    }
}

/// Everything that defines a training run. Missing fields in a config file
/// take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetSpec,
    pub gen_loss: GenLoss,
    pub batch_size: usize,
    pub steps: usize,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    /// Adam with lr 1e-3 by default; the generator moves ten times faster
    /// than the discriminator.
    pub g_optimizer: OptimizerConfig,
    /// Adam with lr 1e-4 by default.
    pub d_optimizer: OptimizerConfig,
    /// Newton-Schulz iterations for the Fréchet forward pass.
    pub sqrt_iterations: usize,
    /// Random projections for the sliced loss.
    pub swg_projections: usize,
    pub max_swg: MaxSlicedConfig,
    pub ot_exponent: Exponent,
    pub z_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub init_std: f64,
    pub seed: u64,
    /// Snapshot and evaluate every this many steps; 0 disables both.
    pub snapshot_every: usize,
    pub snapshot_points: usize,
    pub eval_samples: usize,
    pub coverage_radius: f64,
    /// When false the timing columns are written as 0 so that metrics files
    /// are reproducible byte for byte.
    pub timings: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            gen_loss: GenLoss::Frechet,
            batch_size: 256,
            steps: 5000,
            d_steps: 1,
            g_optimizer: OptimizerConfig::Adam(AdamHyper {
                lr: 1e-3,
                ..AdamHyper::default()
            }),
            d_optimizer: OptimizerConfig::default(),
            sqrt_iterations: 15,
            swg_projections: 512,
            max_swg: MaxSlicedConfig::default(),
            ot_exponent: Exponent::Two,
            z_dim: DEFAULT_Z_DIM,
            g_hidden: vec![128, 128],
            d_hidden: vec![128, 128],
            init_std: 0.02,
            seed: 0,
            snapshot_every: 500,
            snapshot_points: 1000,
            eval_samples: 10_000,
            coverage_radius: 0.5,
            timings: true,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size < 2 {
            return fail(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if self.d_steps < 1 {
            return fail("d_steps must be >= 1".into());
        }
        if !(1..=100).contains(&self.sqrt_iterations) {
            return fail(format!(
                "sqrt_iterations must lie in [1, 100], got {}",
                self.sqrt_iterations
            ));
        }
        if self.swg_projections < 1 {
            return fail("swg_projections must be >= 1".into());
        }
        if self.max_swg.k_candidates < 1 {
            return fail("max_swg.k_candidates must be >= 1".into());
        }
        if self.z_dim < 1 {
            return fail("z_dim must be >= 1".into());
        }
        if self.d_hidden.is_empty() {
            return fail("the discriminator needs at least one hidden layer".into());
        }
        if self.g_hidden.iter().chain(&self.d_hidden).any(|&w| w == 0) {
            return fail("hidden widths must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return fail("init_std must be positive".into());
        }
        if self.snapshot_every > 0 && (self.snapshot_points < 1 || self.eval_samples < 1) {
            return fail("snapshot_points and eval_samples must be >= 1".into());
        }
        if !(self.coverage_radius > 0.0) {
            return fail("coverage_radius must be positive".into());
        }
        Ok(())
    }

    pub fn loss_settings(&self) -> LossSettings {
        LossSettings {
            gen_loss: self.gen_loss,
            sqrt_iterations: self.sqrt_iterations,
            swg_projections: self.swg_projections,
            max_swg: self.max_swg,
            ot_exponent: self.ot_exponent,
        }
    }
}

/// The part of a configuration that defines the generator distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSettings {
    pub gen_loss: GenLoss,
    pub sqrt_iterations: usize,
    pub swg_projections: usize,
    pub max_swg: MaxSlicedConfig,
    pub ot_exponent: Exponent,
}

impl LossSettings {
    /// Defaults of [`TrainConfig`] for the given loss.
    pub fn new(gen_loss: GenLoss) -> Self {
        TrainConfig {
            gen_loss,
            ..TrainConfig::default()
        }
        .loss_settings()
    }

    fn frechet(&self) -> FrechetConfig {
        FrechetConfig {
            sqrt: SqrtMethod::newton_schulz(self.sqrt_iterations),
        }
    }
}

/// One training step's telemetry. Coverage fields are filled on evaluation
/// steps of mixture datasets only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub d_ms: f64,
    pub g_fwd_ms: f64,
    pub g_bwd_ms: f64,
    pub mode_coverage: Option<usize>,
    pub hq_fraction: Option<f64>,
}

pub const METRICS_HEADER: [&str; 8] = [
    "step",
    "d_loss",
    "g_loss",
    "d_ms",
    "g_fwd_ms",
    "g_bwd_ms",
    "mode_coverage",
    "hq_fraction",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub covered: usize,
    pub high_quality_fraction: f64,
}

/// A center is covered when at least 1% of `samples` lie within `radius` of
/// it; the high-quality fraction is the share of samples within `radius` of
/// any center.
pub fn mode_coverage(samples: &Matrix, centers: &[[f64; 2]], radius: f64) -> Result<Coverage> {
    if samples.rows() == 0 {
        return Err(Error::Empty);
    }
    if samples.cols() != 2 {
        return Err(Error::Shape(format!(
            "expected 2D samples, got {} columns",
            samples.cols()
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Config("radius must be positive".into()));
    }
    let r2 = radius * radius;
    let mut hits = vec![0usize; centers.len()];
    let mut good = 0usize;
    for row in samples.row_iter() {
        let mut any = false;
        for (h, c) in hits.iter_mut().zip(centers) {
            if (row[0] - c[0]).powi(2) + (row[1] - c[1]).powi(2) <= r2 {
                *h += 1;
                any = true;
            }
        }
        good += usize::from(any);
    }
    let n = samples.rows() as f64;
    Ok(Coverage {
        covered: hits.iter().filter(|&&h| h as f64 >= 0.01 * n).count(),
        high_quality_fraction: good as f64 / n,
    })
}

/// Hooks into the training loop.
pub trait TrainObserver {
    /// After each discriminator update, with its cross-entropy loss.
    fn on_discriminator_step(&mut self, _step: usize, _loss: f64, _d: &MlpParams) {}
    /// After the generator distance has been evaluated.
    fn on_generator_distance(&mut self, _step: usize, _value: f64) {}
    fn on_row(&mut self, _row: &MetricsRow) {}
}

impl TrainObserver for () {}

/// Generated points at one snapshot step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub points: Matrix,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub generator: MlpParams,
    pub discriminator: MlpParams,
    pub metrics: Vec<MetricsRow>,
    pub snapshots: Vec<Snapshot>,
}

/// Both networks in one checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub step: usize,
    pub generator: MlpCheckpoint,
    pub discriminator: MlpCheckpoint,
}

/// Independent random streams derived from the run seed.
struct Streams {
    data: ChaCha8Rng,
    prior: ChaCha8Rng,
    projections: ChaCha8Rng,
    eval: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Freshly initialized generator and discriminator for `cfg`.
pub fn init_networks(cfg: &TrainConfig) -> Result<(MlpParams, MlpParams)> {
    let mut rng = stream(cfg.seed, 0);
    let mut g_dims = vec![cfg.z_dim];
    g_dims.extend(&cfg.g_hidden);
    g_dims.push(2);
    let mut d_dims = vec![2];
    d_dims.extend(&cfg.d_hidden);
    d_dims.push(1);
    let g = MlpParams::init(
        &g_dims,
        Activation::Relu,
        Activation::Linear,
        cfg.init_std,
        &mut rng,
    )?;
    let d = MlpParams::init(
        &d_dims,
        Activation::Relu,
        Activation::Sigmoid,
        cfg.init_std,
        &mut rng,
    )?;
    Ok((g, d))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// One discriminator update on a real and a generated batch. Returns the
/// cross-entropy before the update.
pub fn discriminator_step(
    d: &mut MlpParams,
    opt: &mut Optimizer,
    real: &Matrix,
    fake: &Matrix,
) -> Result<f64> {
    let (pr, cache_r) = d.forward(real)?;
    let (pf, cache_f) = d.forward(fake)?;
    let bce = bce_discriminator_loss(
        &clamp_probabilities(&pr, PROB_EPS),
        &clamp_probabilities(&pf, PROB_EPS),
    )?;
    let (mut grads, _) = d.backward(&cache_r, &bce.grad_real)?;
    let (gf, _) = d.backward(&cache_f, &bce.grad_fake)?;
    add_grads(&mut grads, &gf);
    opt.step(d, &grads)?;
    Ok(bce.loss)
}

fn add_grads(acc: &mut MlpGrads, other: &MlpGrads) {
    for (a, b) in acc.layers.iter_mut().zip(&other.layers) {
        a.weight.axpy(1.0, &b.weight);
        for (x, y) in a.bias.as_mut_slice().iter_mut().zip(b.bias.as_slice()) {
            *x += y;
        }
    }
}

/// Generator-side distance between real and generated feature batches, and
/// its gradient with respect to the generated features. Sums over samples
/// are divided by the batch size. The forward time covers the distance
/// value; the backward time covers its gradient. The sliced losses produce
/// both in one pass, which is timed as forward.
#[derive(Debug, Clone)]
pub struct FeatureLoss {
    pub value: f64,
    pub grad: Matrix,
    pub fwd_ms: f64,
    pub bwd_ms: f64,
}

pub fn feature_loss(
    cfg: &LossSettings,
    feat_real: &Matrix,
    feat_fake: &Matrix,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureLoss> {
    let n = feat_fake.rows() as f64;
    let t = Instant::now();
    match cfg.gen_loss {
        GenLoss::Frechet => {
            let pd = estimate_gaussian(feat_real)?;
            let fwd = FrechetForward::new(feat_fake, &pd, &cfg.frechet())?;
            let fwd_ms = ms(t);
            let t = Instant::now();
            let grad = fwd.backward()?;
            Ok(FeatureLoss {
                value: fwd.value,
                grad,
                fwd_ms,
                bwd_ms: ms(t),
            })
        }
        GenLoss::Ot => {
            let (cost, assignment) = ot_cost(feat_real, feat_fake, cfg.ot_exponent)?;
            let fwd_ms = ms(t);
            let t = Instant::now();
            let grad = ot_grad(feat_real, feat_fake, &assignment, cfg.ot_exponent)?.scale(1.0 / n);
            Ok(FeatureLoss {
                value: cost / n,
                grad,
                fwd_ms,
                bwd_ms: ms(t),
            })
        }
        GenLoss::Swg | GenLoss::MaxSwg => {
            let directions = if cfg.gen_loss == GenLoss::Swg {
                draw_directions(feat_real.cols(), cfg.swg_projections, rng)
            } else {
                let (_, omega) = max_sliced_wasserstein(
                    feat_real,
                    feat_fake,
                    cfg.max_swg.k_candidates,
                    cfg.max_swg.ascent_steps,
                    rng,
                )?;
                vec![omega]
            };
            let (value, grad) = projected_wasserstein_with_grad(feat_real, feat_fake, &directions)?;
            Ok(FeatureLoss {
                value: value / n,
                grad: grad.scale(1.0 / n),
                fwd_ms: ms(t),
                bwd_ms: 0.0,
            })
        }
    }
}

/// Parameter gradients of the generator for the feature-space loss, with
/// the discriminator held fixed. Only the generated batch is differentiated;
/// real features enter as constants.
pub fn generator_grads(
    cfg: &LossSettings,
    g: &MlpParams,
    d: &MlpParams,
    z: &Matrix,
    real: &Matrix,
    rng: &mut ChaCha8Rng,
) -> Result<(FeatureLoss, MlpGrads)> {
    let (fake, g_cache) = g.forward(z)?;
    let (feat_real, _) = d.features(real)?;
    let (feat_fake, f_cache) = d.features(&fake)?;
    let mut loss = feature_loss(cfg, &feat_real, &feat_fake, rng)?;
    let t = Instant::now();
    let (_, grad_fake) = d.features_backward(&f_cache, &loss.grad)?;
    let (grads, _) = g.backward(&g_cache, &grad_fake)?;
    loss.bwd_ms += ms(t);
    Ok((loss, grads))
}

fn spectrum(features: &Matrix) -> Vec<f64> {
    estimate_gaussian(features)
        .and_then(|s| sym_eig_default(&s.cov))
        .map(|e| e.eigenvalues.into_vec())
        .unwrap_or_default()
}

fn abort(step: usize, cause: Error, d: &MlpParams, real: &Matrix, fake: &Matrix) -> Error {
    let (spectrum_real, spectrum_fake) = match (d.features(real), d.features(fake)) {
        (Ok((fr, _)), Ok((ff, _))) => (spectrum(&fr), spectrum(&ff)),
        _ => (Vec::new(), Vec::new()),
    };
    Error::TrainingAborted {
        step,
        cause: Box::new(cause),
        spectrum_real,
        spectrum_fake,
    }
}

fn generate(g: &MlpParams, cfg: &TrainConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    let z = sample_prior(cfg.z_dim, n, rng)?;
    g.forward(&z).map(|(x, _)| x)
}

/// Snapshot points, then coverage on a separate evaluation batch.
fn snapshot_and_eval(
    cfg: &TrainConfig,
    g: &MlpParams,
    step: usize,
    centers: &[[f64; 2]],
    rng: &mut ChaCha8Rng,
) -> Result<(Snapshot, Option<Coverage>)> {
    let points = generate(g, cfg, cfg.snapshot_points, rng)?;
    let coverage = if centers.is_empty() {
        None
    } else {
        let eval = generate(g, cfg, cfg.eval_samples, rng)?;
        Some(mode_coverage(&eval, centers, cfg.coverage_radius)?)
    };
    Ok((Snapshot { step, points }, coverage))
}

struct Writers {
    dir: PathBuf,
    metrics: csv::Writer<fs::File>,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("output: {e}"))
}

impl Writers {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir.join("snapshots")).map_err(io_err)?;
        let mut metrics = csv::Writer::from_path(dir.join("metrics.csv")).map_err(io_err)?;
        metrics.write_record(METRICS_HEADER).map_err(io_err)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    fn row(&mut self, r: &MetricsRow) -> Result<()> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        self.metrics
            .write_record([
                r.step.to_string(),
                r.d_loss.to_string(),
                r.g_loss.to_string(),
                r.d_ms.to_string(),
                r.g_fwd_ms.to_string(),
                r.g_bwd_ms.to_string(),
                opt(r.mode_coverage.map(|c| c.to_string())),
                opt(r.hq_fraction.map(|f| f.to_string())),
            ])
            .map_err(io_err)?;
        self.metrics.flush().map_err(io_err)
    }

    fn snapshot(&self, s: &Snapshot) -> Result<()> {
        let path = self
            .dir
            .join("snapshots")
            .join(format!("step_{:06}.csv", s.step));
        write_snapshot_csv(&path, s)
    }
}

/// Snapshot CSV with header `step,x,y`.
pub fn write_snapshot_csv(path: &Path, s: &Snapshot) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["step", "x", "y"]).map_err(io_err)?;
    for row in s.points.row_iter() {
        w.serialize((s.step, row[0], row[1])).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Runs `cfg.steps` generator updates. Files are written under `out_dir`
/// when it is set: `metrics.csv`, `snapshots/step_NNNNNN.csv` and
/// `checkpoint.json`.
pub fn train_gan(cfg: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutput> {
    cfg.validate()?;
    let (mut g, mut d) = init_networks(cfg)?;
    let mut g_opt = Optimizer::new(cfg.g_optimizer, &g);
    let mut d_opt = Optimizer::new(cfg.d_optimizer, &d);
    let mut rngs = Streams {
        data: stream(cfg.seed, 1),
        prior: stream(cfg.seed, 2),
        projections: stream(cfg.seed, 3),
        eval: stream(cfg.seed, 4),
    };
    let mut writers = cfg.out_dir.as_deref().map(Writers::create).transpose()?;
    let centers = cfg.dataset.centers();
    let loss_cfg = cfg.loss_settings();
    let n = cfg.batch_size;
    let mut metrics = Vec::with_capacity(cfg.steps);
    let mut snapshots = Vec::new();

    if cfg.steps > 0 && cfg.snapshot_every > 0 {
        let (snap, _) = snapshot_and_eval(cfg, &g, 0, &centers, &mut rngs.eval)?;
        if let Some(w) = &writers {
            w.snapshot(&snap)?;
        }
        snapshots.push(snap);
    }

    for step in 1..=cfg.steps {
        let t = Instant::now();
        let mut d_loss = 0.0;
        let mut batch = None;
        for _ in 0..cfg.d_steps {
            let real = sample_real(&cfg.dataset, n, &mut rngs.data)?;
            let z = sample_prior(cfg.z_dim, n, &mut rngs.prior)?;
            let (fake, _) = g.forward(&z)?;
            d_loss = discriminator_step(&mut d, &mut d_opt, &real, &fake)
                .map_err(|e| abort(step, e, &d, &real, &fake))?;
            observer.on_discriminator_step(step, d_loss, &d);
            batch = Some((real, z, fake));
        }
        let d_ms = ms(t);
        let (real, z, fake) = batch.expect("d_steps >= 1");

        let (loss, grads) = generator_grads(&loss_cfg, &g, &d, &z, &real, &mut rngs.projections)
            .map_err(|e| abort(step, e, &d, &real, &fake))?;
        observer.on_generator_distance(step, loss.value);
        if !loss.value.is_finite() || !d_loss.is_finite() || !grads.all_finite() {
            let cause = Error::Domain(format!(
                "non-finite loss or gradient (d_loss {d_loss}, g_loss {})",
                loss.value
            ));
            return Err(abort(step, cause, &d, &real, &fake));
        }
        g_opt.step(&mut g, &grads)?;

        let evaluate =
            cfg.snapshot_every > 0 && (step % cfg.snapshot_every == 0 || step == cfg.steps);
        let mut coverage = None;
        if evaluate {
            let (snap, cov) = snapshot_and_eval(cfg, &g, step, &centers, &mut rngs.eval)?;
            if let Some(w) = &writers {
                w.snapshot(&snap)?;
            }
            snapshots.push(snap);
            coverage = cov;
        }
        let time = |v: f64| if cfg.timings { v } else { 0.0 };
        let row = MetricsRow {
            step,
            d_loss,
            g_loss: loss.value,
            d_ms: time(d_ms),
            g_fwd_ms: time(loss.fwd_ms),
            g_bwd_ms: time(loss.bwd_ms),
            mode_coverage: coverage.map(|c| c.covered),
            hq_fraction: coverage.map(|c| c.high_quality_fraction),
        };
        if let Some(w) = writers.as_mut() {
            w.row(&row)?;
        }
        observer.on_row(&row);
        metrics.push(row);
    }

    if let Some(dir) = &cfg.out_dir {
        let ckpt = GanCheckpoint {
            step: cfg.steps,
            generator: MlpCheckpoint::from(&g),
            discriminator: MlpCheckpoint::from(&d),
        };
        let json = serde_json::to_string(&ckpt).map_err(io_err)?;
        fs::write(dir.join("checkpoint.json"), json).map_err(io_err)?;
    }
    Ok(TrainOutput {
        generator: g,
        discriminator: d,
        metrics,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetKind;
    use crate::random::random_matrix;
    use rand::Rng;

    fn g8_centers() -> Vec<[f64; 2]> {
        DatasetSpec::new(DatasetKind::Gaussians8).centers()
    }

    #[test]
    fn coverage_of_exact_centers() {
        let centers = g8_centers();
        let samples = Matrix::from_fn(800, 2, |i, j| centers[i % 8][j]);
        let c = mode_coverage(&samples, &centers, 0.5).unwrap();
        assert_eq!(c.covered, 8);
        assert_eq!(c.high_quality_fraction, 1.0);
    }

    #[test]
    fn coverage_of_a_single_center() {
        let centers = g8_centers();
        let samples = Matrix::from_fn(100, 2, |_, j| centers[3][j]);
        let c = mode_coverage(&samples, &centers, 0.5).unwrap();
        assert_eq!(c.covered, 1);
        assert_eq!(c.high_quality_fraction, 1.0);
    }

    #[test]
    fn coverage_of_uniform_noise_matches_area_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        let samples = Matrix::from_fn(100_000, 2, |_, _| rng.random_range(-4.0..4.0));
        let c = mode_coverage(&samples, &g8_centers(), 0.5).unwrap();
        let expected = 8.0 * std::f64::consts::PI * 0.25 / 64.0;
        assert!((c.high_quality_fraction - expected).abs() < 0.03);
        assert_eq!(c.covered, 8);
    }

    #[test]
    fn coverage_rejects_bad_input() {
        let centers = g8_centers();
        assert!(matches!(
            mode_coverage(&Matrix::zeros(0, 2), &centers, 0.5),
            Err(Error::Empty)
        ));
        assert!(matches!(
            mode_coverage(&Matrix::zeros(3, 3), &centers, 0.5),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            mode_coverage(&Matrix::zeros(3, 2), &centers, 0.0),
            Err(Error::Config(_))
        ));
    }

    fn tiny_config(gen_loss: GenLoss) -> TrainConfig {
        TrainConfig {
            gen_loss,
            batch_size: 32,
            steps: 6,
            z_dim: 3,
            g_hidden: vec![8],
            d_hidden: vec![8, 8],
            swg_projections: 16,
            max_swg: MaxSlicedConfig {
                k_candidates: 8,
                ascent_steps: 2,
            },
            snapshot_every: 3,
            snapshot_points: 20,
            eval_samples: 200,
            timings: false,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_leave_params_unchanged() {
        let cfg = TrainConfig {
            steps: 0,
            ..tiny_config(GenLoss::Frechet)
        };
        let out = train_gan(&cfg, &mut ()).unwrap();
        let (g, d) = init_networks(&cfg).unwrap();
        assert_eq!(out.generator, g);
        assert_eq!(out.discriminator, d);
        assert!(out.metrics.is_empty());
        assert!(out.snapshots.is_empty());
    }

    #[test]
    fn every_loss_trains_and_is_deterministic() {
        for loss in [GenLoss::Frechet, GenLoss::Ot, GenLoss::Swg, GenLoss::MaxSwg] {
            let cfg = tiny_config(loss);
            let a = train_gan(&cfg, &mut ()).unwrap();
            let b = train_gan(&cfg, &mut ()).unwrap();
            assert_eq!(a.metrics, b.metrics, "{loss}");
            assert_eq!(a.generator, b.generator, "{loss}");
            assert_eq!(a.metrics.len(), 6);
            let (g0, _) = init_networks(&cfg).unwrap();
            assert_ne!(a.generator, g0, "{loss}");
            let evaluated: Vec<usize> = a
                .metrics
                .iter()
                .filter(|r| r.mode_coverage.is_some())
                .map(|r| r.step)
                .collect();
            assert_eq!(evaluated, vec![3, 6]);
            let steps: Vec<usize> = a.snapshots.iter().map(|s| s.step).collect();
            assert_eq!(steps, vec![0, 3, 6]);
            assert!(a.metrics.iter().all(|r| r.d_ms == 0.0 && r.g_fwd_ms == 0.0));
        }
    }

    #[test]
    fn metrics_files_are_identical_across_runs() {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let texts: Vec<String> = dirs
            .iter()
            .map(|dir| {
                let cfg = TrainConfig {
                    out_dir: Some(dir.path().to_path_buf()),
                    ..tiny_config(GenLoss::Frechet)
                };
                train_gan(&cfg, &mut ()).unwrap();
                assert!(dir.path().join("snapshots/step_000003.csv").exists());
                assert!(dir.path().join("checkpoint.json").exists());
                fs::read_to_string(dir.path().join("metrics.csv")).unwrap()
            })
            .collect();
        assert_eq!(texts[0], texts[1]);
        let mut lines = texts[0].lines();
        assert_eq!(lines.next(), Some(METRICS_HEADER.join(",").as_str()));
        assert_eq!(lines.count(), 6);
        let snap = fs::read_to_string(dirs[0].path().join("snapshots/step_000000.csv")).unwrap();
        assert!(snap.starts_with("step,x,y\n0,"));
        assert_eq!(snap.lines().count(), 21);
    }

    /// Replays every discriminator update from the logged state and checks
    /// that nothing but the cross-entropy drove it.
    #[derive(Default)]
    struct Recorder {
        d_states: Vec<MlpParams>,
        distances: Vec<f64>,
    }

    impl TrainObserver for Recorder {
        fn on_discriminator_step(&mut self, _step: usize, _loss: f64, d: &MlpParams) {
            self.d_states.push(d.clone());
        }
        fn on_generator_distance(&mut self, _step: usize, value: f64) {
            self.distances.push(value);
        }
    }

    #[test]
    fn discriminator_ignores_generator_loss() {
        // Different generator losses share the initial networks and data
        // streams, so the very first discriminator update must coincide.
        let mut firsts = Vec::new();
        for loss in [GenLoss::Frechet, GenLoss::Ot, GenLoss::Swg] {
            let mut rec = Recorder::default();
            train_gan(
                &TrainConfig {
                    steps: 1,
                    ..tiny_config(loss)
                },
                &mut rec,
            )
            .unwrap();
            assert_eq!(rec.distances.len(), 1);
            firsts.push(rec.d_states[0].clone());
        }
        assert_eq!(firsts[0], firsts[1]);
        assert_eq!(firsts[0], firsts[2]);

        // The discriminator update equals a standalone cross-entropy step.
        let cfg = TrainConfig {
            steps: 1,
            ..tiny_config(GenLoss::Frechet)
        };
        let (g, mut d) = init_networks(&cfg).unwrap();
        let real = sample_real(&cfg.dataset, cfg.batch_size, &mut stream(cfg.seed, 1)).unwrap();
        let z = sample_prior(cfg.z_dim, cfg.batch_size, &mut stream(cfg.seed, 2)).unwrap();
        let (fake, _) = g.forward(&z).unwrap();
        let mut opt = Optimizer::new(cfg.d_optimizer, &d);
        discriminator_step(&mut d, &mut opt, &real, &fake).unwrap();
        assert_eq!(d, firsts[0]);
    }

    #[test]
    fn d_steps_run_per_generator_step() {
        let mut rec = Recorder::default();
        let cfg = TrainConfig {
            steps: 2,
            d_steps: 3,
            ..tiny_config(GenLoss::Ot)
        };
        train_gan(&cfg, &mut rec).unwrap();
        assert_eq!(rec.d_states.len(), 6);
        assert_eq!(rec.distances.len(), 2);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = tiny_config(GenLoss::Frechet);
        let bad = [
            TrainConfig {
                batch_size: 1,
                ..base.clone()
            },
            TrainConfig {
                d_steps: 0,
                ..base.clone()
            },
            TrainConfig {
                sqrt_iterations: 0,
                ..base.clone()
            },
            TrainConfig {
                sqrt_iterations: 101,
                ..base.clone()
            },
            TrainConfig {
                d_hidden: vec![],
                ..base.clone()
            },
            TrainConfig {
                coverage_radius: 0.0,
                ..base.clone()
            },
        ];
        for cfg in bad {
            assert!(matches!(train_gan(&cfg, &mut ()), Err(Error::Config(_))));
        }
    }

    #[test]
    fn config_round_trips_through_json_with_defaults() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"gen_loss": "max_swg", "steps": 7}"#).unwrap();
        assert_eq!(cfg.gen_loss, GenLoss::MaxSwg);
        assert_eq!(cfg.steps, 7);
        assert_eq!(cfg.batch_size, TrainConfig::default().batch_size);
        let back: TrainConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"stepz": 1}"#).is_err());
        assert_eq!("max-swg".parse::<GenLoss>().unwrap(), GenLoss::MaxSwg);
    }

    fn offset_net(dims: &[usize], output: Activation, seed: u64) -> MlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::init(dims, Activation::Relu, output, 0.6, &mut rng).unwrap();
        // Positive biases keep units alive and away from the ReLU kink.
        for l in &mut p.layers {
            for b in l.bias.as_mut_slice() {
                *b = rng.random_range(0.1..0.4);
            }
        }
        p
    }

    fn generator_loss(
        settings: &LossSettings,
        g: &MlpParams,
        d: &MlpParams,
        z: &Matrix,
        real: &Matrix,
        seed: u64,
    ) -> f64 {
        let (fake, _) = g.forward(z).unwrap();
        let (fr, _) = d.features(real).unwrap();
        let (ff, _) = d.features(&fake).unwrap();
        feature_loss(settings, &fr, &ff, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
            .value
    }

    #[test]
    fn generator_grads_match_finite_differences() {
        let g = offset_net(&[3, 6, 2], Activation::Linear, 71);
        let d = offset_net(&[2, 5, 4, 1], Activation::Sigmoid, 72);
        assert!(g.num_params() + d.num_params() <= 200);
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let z = random_matrix(12, 3, &mut rng);
        let real = random_matrix(12, 2, &mut rng);
        for loss in [GenLoss::Frechet, GenLoss::Ot, GenLoss::Swg] {
            let settings = LossSettings {
                sqrt_iterations: 60,
                swg_projections: 8,
                ..LossSettings::new(loss)
            };
            let (_, grads) = generator_grads(
                &settings,
                &g,
                &d,
                &z,
                &real,
                &mut ChaCha8Rng::seed_from_u64(9),
            )
            .unwrap();
            let h = 1e-6;
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            for (li, layer) in g.layers.iter().enumerate() {
                let n_w = layer.weight.as_slice().len();
                for idx in 0..n_w + layer.bias.as_slice().len() {
                    let eval = |delta: f64| {
                        let mut p = g.clone();
                        if idx < n_w {
                            p.layers[li].weight.as_mut_slice()[idx] += delta;
                        } else {
                            p.layers[li].bias.as_mut_slice()[idx - n_w] += delta;
                        }
                        generator_loss(&settings, &p, &d, &z, &real, 9)
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = if idx < n_w {
                        grads.layers[li].weight.as_slice()[idx]
                    } else {
                        grads.layers[li].bias.as_slice()[idx - n_w]
                    };
                    worst = worst.max((fd - an).abs());
                    scale = scale.max(an.abs());
                }
            }
            assert!(worst / scale < 1e-4, "{loss}: {worst:e} vs {scale:e}");
        }
    }
}
