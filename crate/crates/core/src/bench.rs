//! Per-batch cost of the generator distances as the batch grows.
//!
//! Each cell times the forward distance and its gradient on fresh random
//! `N×d` feature matrices. Trial 0 is a warm-up and is not recorded. Trials
//! run strictly one after another.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random::random_matrix;
use crate::train::{feature_loss, GenLoss, LossSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<GenLoss>,
    pub n_values: Vec<usize>,
    pub d: usize,
    pub trials: usize,
    pub sqrt_iterations: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            methods: vec![GenLoss::Frechet, GenLoss::Ot],
            n_values: vec![64, 128, 256, 512],
            d: 64,
            trials: 6,
            sqrt_iterations: 15,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: GenLoss,
    pub n: usize,
    pub d: usize,
    pub trial: usize,
    pub forward_ms: f64,
    pub backward_ms: f64,
}

impl BenchRow {
    pub fn total_ms(&self) -> f64 {
        self.forward_ms + self.backward_ms
    }
}

pub const BENCH_HEADER: [&str; 6] = ["method", "n", "d", "trial", "forward_ms", "backward_ms"];

/// Times every `(method, n)` cell for `cfg.trials` trials, dropping the first.
pub fn bench_distances(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.trials < 3 {
        return Err(Error::Config(format!(
            "need at least 3 trials, got {}",
            cfg.trials
        )));
    }
    if let Some(&n) = cfg.n_values.iter().find(|&&n| n < 2) {
        return Err(Error::Config(format!("batch sizes must be >= 2, got {n}")));
    }
    if cfg.d == 0 {
        return Err(Error::Config("feature dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let settings = LossSettings {
            sqrt_iterations: cfg.sqrt_iterations,
            ..LossSettings::new(method)
        };
        for &n in &cfg.n_values {
            for trial in 0..cfg.trials {
                let real = random_matrix(n, cfg.d, &mut rng);
                let fake = random_matrix(n, cfg.d, &mut rng);
                let out = feature_loss(&settings, &real, &fake, &mut rng)?;
                if trial > 0 {
                    rows.push(BenchRow {
                        method,
                        n,
                        d: cfg.d,
                        trial,
                        forward_ms: out.fwd_ms,
                        backward_ms: out.bwd_ms,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Median forward+backward time of one cell, if it has rows.
pub fn median_total_ms(rows: &[BenchRow], method: GenLoss, n: usize) -> Option<f64> {
    let mut t: Vec<f64> = rows
        .iter()
        .filter(|r| r.method == method && r.n == n)
        .map(BenchRow::total_ms)
        .collect();
    if t.is_empty() {
        return None;
    }
    t.sort_by(f64::total_cmp);
    let m = t.len() / 2;
    Some(if t.len() % 2 == 1 {
        t[m]
    } else {
        0.5 * (t[m - 1] + t[m])
    })
}

/// Writes rows as CSV with header `method,n,d,trial,forward_ms,backward_ms`.
pub fn write_bench_csv<W: Write>(out: W, rows: &[BenchRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.trial.to_string(),
            r.forward_ms.to_string(),
            r.backward_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
