//! `fot`: training, benchmarking, square-root diagnostics and standalone
//! distance computation.
//!
//! Machine-readable results go to stdout (JSON or CSV); progress goes to
//! stderr. Exit codes: 0 success, 2 usage, parse or shape errors, 3 numerical
//! failures.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use fot_core::bench::{bench_distances, median_total_ms, write_bench_csv, BenchConfig};
use fot_core::data::{sample_real, write_points_csv, DatasetKind, DatasetSpec};
use fot_core::distances::{
    frechet_distance, max_sliced_wasserstein, ot_cost, sliced_wasserstein, Exponent, FrechetConfig,
};
use fot_core::matsqrt::sqrt_convergence;
use fot_core::nn::OptimizerConfig;
use fot_core::stats::estimate_gaussian;
use fot_core::train::{train_gan, GenLoss, MetricsRow, TrainConfig, TrainObserver};
use fot_core::{Error, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "fot",
    version,
    about = "Differentiable distributional distances and a toy GAN trainer"
)]
struct Cli {
    /// Seed for every stochastic path. Overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, global = true, env = "FOT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a GAN on a synthetic 2D dataset.
    ///
    /// Settings resolve as: command-line flag, then config file, then
    /// built-in default. Either --dataset or --config is required.
    /// Writes metrics.csv, snapshots/step_NNNNNN.csv and checkpoint.json
    /// under the output directory (default ./out).
    Train(TrainArgs),
    /// Time the generator losses as the batch grows; writes bench.csv.
    Bench(BenchArgs),
    /// Newton-Schulz convergence and Sylvester gradient accuracy as CSV
    /// `t,trial,residual,grad_rel_err`.
    CheckSqrt(CheckSqrtArgs),
    /// Distance between two sample CSV files, printed as JSON.
    Distances(DistancesArgs),
    /// Draw samples from a synthetic dataset as CSV `x,y`.
    Sample(SampleArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML or JSON config file (JSON when the extension is .json).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    /// frechet, ot, swg or max_swg.
    #[arg(long)]
    gen_loss: Option<GenLoss>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Discriminator updates per generator update.
    #[arg(long)]
    d_steps: Option<usize>,
    /// Generator learning rate.
    #[arg(long)]
    g_lr: Option<f64>,
    /// Discriminator learning rate.
    #[arg(long)]
    d_lr: Option<f64>,
    /// Newton-Schulz iterations.
    #[arg(long)]
    sqrt_iterations: Option<usize>,
    /// Random projections for the sliced loss.
    #[arg(long)]
    swg_projections: Option<usize>,
    /// 0 disables snapshots and evaluation.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Write zeros in the timing columns so metrics files are reproducible.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated losses.
    #[arg(long, value_delimiter = ',', default_value = "frechet,ot")]
    methods: Vec<GenLoss>,
    /// Comma-separated batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
    n_values: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    d: usize,
    /// Trials per cell; the first is a discarded warm-up.
    #[arg(long, default_value_t = 6)]
    trials: usize,
    #[arg(long, default_value_t = 15)]
    sqrt_iterations: usize,
}

#[derive(Args)]
struct CheckSqrtArgs {
    #[arg(long, default_value_t = 32)]
    d: usize,
    /// Comma-separated iteration counts.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,15,20")]
    t_values: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Method {
    Frechet,
    Ot,
    Swg,
    MaxSwg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SqrtRoute {
    Eig,
    NewtonSchulz,
}

#[derive(Args)]
struct DistancesArgs {
    file_x: PathBuf,
    file_y: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Ground-cost exponent for ot (1 or 2).
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Random projections for swg.
    #[arg(long, default_value_t = 512)]
    projections: usize,
    /// Candidate directions for max_swg.
    #[arg(long, default_value_t = 128)]
    candidates: usize,
    /// Ascent steps for max_swg.
    #[arg(long, default_value_t = 10)]
    ascent_steps: usize,
    /// Square-root route for frechet.
    #[arg(long, value_enum, default_value = "eig")]
    sqrt: SqrtRoute,
    /// Newton-Schulz iterations when --sqrt newton-schulz.
    #[arg(long, default_value_t = 15)]
    sqrt_iterations: usize,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    dataset: DatasetKind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
}

/// A failure with its exit code.
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(&cli, a),
        Command::Bench(a) => cmd_bench(&cli, a),
        Command::CheckSqrt(a) => cmd_check_sqrt(&cli, a),
        Command::Distances(a) => cmd_distances(&cli, a),
        Command::Sample(a) => cmd_sample(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(path: &Path) -> std::result::Result<TrainConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let ctx = |e: &dyn std::fmt::Display| Failure::Usage(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|x| x == "json") {
        serde_json::from_str(&text).map_err(|e| ctx(&e))
    } else {
        toml::from_str(&text).map_err(|e| ctx(&e))
    }
}

fn set_lr(opt: &mut OptimizerConfig, lr: f64) {
    match opt {
        OptimizerConfig::Adam(h) => h.lr = lr,
        OptimizerConfig::Sgd { lr: l } => *l = lr,
    }
}

fn resolve_train_config(cli: &Cli, a: &TrainArgs) -> std::result::Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => load_config(path)?,
        None if a.dataset.is_none() => {
            let mut cmd = Cli::command();
            let help = cmd
                .find_subcommand_mut("train")
                .map(|c| c.render_usage().to_string())
                .unwrap_or_default();
            return Err(Failure::Usage(format!(
                "train needs --dataset or --config\n\n{help}"
            )));
        }
        None => TrainConfig::default(),
    };
    if let Some(kind) = a.dataset {
        if kind != cfg.dataset.kind {
            cfg.dataset = DatasetSpec {
                seed: cfg.dataset.seed,
                ..DatasetSpec::new(kind)
            };
        }
    }
    if let Some(v) = a.noise_std {
        cfg.dataset.noise_std = v;
    }
    if let Some(v) = a.scale {
        cfg.dataset.scale = v;
    }
    if let Some(v) = a.gen_loss {
        cfg.gen_loss = v;
    }
    if let Some(v) = a.steps {
        cfg.steps = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.d_steps {
        cfg.d_steps = v;
    }
    if let Some(v) = a.g_lr {
        set_lr(&mut cfg.g_optimizer, v);
    }
    if let Some(v) = a.d_lr {
        set_lr(&mut cfg.d_optimizer, v);
    }
    if let Some(v) = a.sqrt_iterations {
        cfg.sqrt_iterations = v;
    }
    if let Some(v) = a.swg_projections {
        cfg.swg_projections = v;
    }
    if let Some(v) = a.snapshot_every {
        cfg.snapshot_every = v;
    }
    if a.no_timings {
        cfg.timings = false;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.dataset.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("out"));
    }
    if cfg.steps < 1 {
        return Err(usage("steps must be >= 1"));
    }
    Ok(cfg)
}

/// Prints evaluation rows to stderr.
struct Progress;

impl TrainObserver for Progress {
    fn on_row(&mut self, r: &MetricsRow) {
        if let (Some(c), Some(hq)) = (r.mode_coverage, r.hq_fraction) {
            eprintln!(
                "step {:>6}  d_loss {:.4}  g_loss {:.5}  coverage {c}  hq {hq:.3}",
                r.step, r.d_loss, r.g_loss
            );
        }
    }
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CmdResult {
    let cfg = resolve_train_config(cli, a)?;
    let out = match train_gan(&cfg, &mut Progress) {
        Ok(out) => out,
        Err(e @ Error::TrainingAborted { .. }) => {
            if let Error::TrainingAborted {
                spectrum_real,
                spectrum_fake,
                ..
            } = &e
            {
                eprintln!("real feature covariance spectrum: {spectrum_real:?}");
                eprintln!("fake feature covariance spectrum: {spectrum_fake:?}");
            }
            return Err(Failure::Numerical(e.to_string()));
        }
        Err(e) => return Err(e.into()),
    };
    let last = out.metrics.iter().rev().find(|r| r.mode_coverage.is_some());
    let summary = json!({
        "steps": cfg.steps,
        "gen_loss": cfg.gen_loss,
        "dataset": cfg.dataset.kind,
        "seed": cfg.seed,
        "out_dir": cfg.out_dir,
        "final_d_loss": out.metrics.last().map(|r| r.d_loss),
        "final_g_loss": out.metrics.last().map(|r| r.g_loss),
        "mode_coverage": last.and_then(|r| r.mode_coverage),
        "hq_fraction": last.and_then(|r| r.hq_fraction),
    });
    println!("{summary}");
    Ok(())
}

fn output_file(cli: &Cli, name: &str) -> std::result::Result<Option<PathBuf>, Failure> {
    match &cli.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            Ok(Some(dir.join(name)))
        }
        None => Ok(None),
    }
}

/// Runs `write` against `out_dir/name` when an output directory is set, and
/// against stdout otherwise.
fn emit_csv<F>(cli: &Cli, name: &str, write: F) -> CmdResult
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match output_file(cli, name)? {
        Some(path) => {
            let mut f =
                fs::File::create(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            write(&mut f).map_err(usage)?;
            eprintln!("wrote {}", path.display());
        }
        None => write(&mut io::stdout().lock()).map_err(usage)?,
    }
    Ok(())
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        methods: a.methods.clone(),
        n_values: a.n_values.clone(),
        d: a.d,
        trials: a.trials,
        sqrt_iterations: a.sqrt_iterations,
        seed: cli.seed.unwrap_or(0),
    };
    let rows = bench_distances(&cfg)?;
    for &m in &cfg.methods {
        for &n in &cfg.n_values {
            if let Some(t) = median_total_ms(&rows, m, n) {
                eprintln!("{m:>8} n={n:<5} median {t:.3} ms");
            }
        }
    }
    emit_csv(cli, "bench.csv", |w| {
        write_bench_csv(w, &rows).map_err(io::Error::other)
    })
}

fn cmd_check_sqrt(cli: &Cli, a: &CheckSqrtArgs) -> CmdResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let rows = sqrt_convergence(a.d, &a.t_values, a.trials, &mut rng)?;
    emit_csv(cli, "check_sqrt.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "trial", "residual", "grad_rel_err"])?;
        for r in &rows {
            out.serialize((r.t, r.trial, r.residual, r.grad_rel_err))?;
        }
        out.flush()
    })
}

/// Reads a numeric CSV. A first row that does not parse as numbers is taken
/// as a header.
fn read_matrix(path: &Path) -> std::result::Result<Matrix, Failure> {
    let ctx = |e: &dyn std::fmt::Display| Failure::Usage(format!("{}: {e}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ctx(&e))?;
    let mut data = Vec::new();
    let mut cols = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ctx(&e))?;
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(ctx(&format!("row {}: {e}", i + 1))),
        };
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(ctx(&format!(
                    "row {} has {} fields, expected {c}",
                    i + 1,
                    values.len()
                )))
            }
            Some(_) => {}
        }
        data.extend(values);
    }
    let cols = cols.ok_or_else(|| ctx(&"no numeric rows"))?;
    Matrix::from_vec(data.len() / cols, cols, data).map_err(|e| ctx(&e))
}

fn cmd_distances(cli: &Cli, a: &DistancesArgs) -> CmdResult {
    let x = read_matrix(&a.file_x)?;
    let y = read_matrix(&a.file_y)?;
    if x.cols() != y.cols() {
        return Err(usage(format!(
            "files have {} and {} columns",
            x.cols(),
            y.cols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
    let report = match a.method {
        Method::Frechet => {
            let cfg = match a.sqrt {
                SqrtRoute::Eig => FrechetConfig::eig(),
                SqrtRoute::NewtonSchulz => FrechetConfig::newton_schulz(a.sqrt_iterations),
            };
            let value = frechet_distance(&estimate_gaussian(&x)?, &estimate_gaussian(&y)?, &cfg)?;
            json!({ "method": "frechet", "value": value })
        }
        Method::Ot => {
            if x.rows() != y.rows() {
                return Err(usage(format!(
                    "ot needs equal row counts, got {} and {}",
                    x.rows(),
                    y.rows()
                )));
            }
            let p = Exponent::try_from(a.p)?;
            let (cost, _) = ot_cost(&x, &y, p)?;
            json!({ "method": "ot", "p": a.p, "value": cost / x.rows() as f64, "total_cost": cost })
        }
        Method::Swg => {
            let value = sliced_wasserstein(&x, &y, a.projections, &mut rng)?;
            json!({ "method": "swg", "value": value, "projections": a.projections })
        }
        Method::MaxSwg => {
            let (value, direction) =
                max_sliced_wasserstein(&x, &y, a.candidates, a.ascent_steps, &mut rng)?;
            json!({ "method": "max_swg", "value": value, "direction": direction })
        }
    };
    println!("{report}");
    Ok(())
}

fn cmd_sample(cli: &Cli, a: &SampleArgs) -> CmdResult {
    let mut spec = DatasetSpec::new(a.dataset);
    if let Some(v) = a.noise_std {
        spec.noise_std = v;
    }
    if let Some(v) = a.scale {
        spec.scale = v;
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    if a.n == 0 {
        return Err(usage("n must be >= 1"));
    }
    let points = sample_real(&spec, a.n, &mut spec.rng())?;
    match output_file(cli, "samples.csv")? {
        Some(path) => {
            write_points_csv(&path, &points).map_err(usage)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["x", "y"]).map_err(usage)?;
            for r in points.row_iter() {
                w.serialize((r[0], r[1])).map_err(usage)?;
            }
            w.flush().map_err(usage)?;
        }
    }
    Ok(())
}
