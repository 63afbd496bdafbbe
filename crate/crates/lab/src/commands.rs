//! Subcommand implementations shared by the binary and the tests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ccl_core::gradcheck::{self, GradCheckOptions, TrialReport};
use ccl_core::numkernel;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::{
    CenterModeName, ConfigError, DatasetConfig, LossName, NoiseConfig, NoiseKindName, OptimizerConfig, OptimizerName,
    TrainConfig,
};
use crate::error::Result;
use crate::io;
use crate::report::{GeometrySummary, RunReport};
use crate::train::{self, TrainOutcome};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub m: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(m) = self.m {
            cfg.m = m;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

/// First 12 hex digits of the SHA-256 of the canonical config JSON.
pub fn config_hash(cfg: &TrainConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_json().as_bytes()))[..12].to_owned()
}

/// `<out_dir>/<loss>-<hash>-seed<seed>`.
pub fn run_dir(out_dir: &Path, cfg: &TrainConfig) -> PathBuf {
    out_dir.join(format!("{}-{}-seed{}", cfg.loss.as_str(), config_hash(cfg), cfg.seed))
}

/// Trains in memory without touching the filesystem.
pub fn run_training(cfg: &TrainConfig) -> Result<(RunReport, TrainOutcome)> {
    cfg.validate()?;
    let started = Instant::now();
    let ds = train::load_dataset(cfg)?;
    let outcome = train::train(cfg, &ds)?;
    let report = RunReport {
        version: RunReport::version_stamp(),
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        initial_recall: outcome.initial_recall.clone(),
        epochs: outcome.epochs.clone(),
        final_geometry: GeometrySummary::from(&outcome.geometry),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((report, outcome))
}

/// A finished run and where its artifacts live.
#[derive(Debug)]
pub struct TrainRun {
    pub dir: PathBuf,
    pub report: RunReport,
    pub outcome: TrainOutcome,
}

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_METRICS_CSV: &str = "final_metrics.csv";
pub const FINAL_METRICS_JSON: &str = "final_metrics.json";
pub const CENTERS_FILE: &str = "centers.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ccl";
pub const CONFIG_FILE: &str = "config.json";
pub const SCATTER_STEM: &str = "scatter";

/// Trains and writes every artifact into the run directory.
pub fn cmd_train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainRun> {
    let (report, outcome) = run_training(cfg)?;
    let dir = run_dir(out_dir, cfg);
    io::create_dir(&dir)?;
    io::write_text(&dir.join(CONFIG_FILE), &cfg.to_json())?;
    io::write_text(&dir.join(REPORT_FILE), &serde_json::to_string_pretty(&report)?)?;
    io::write_metrics_csv(&dir.join(METRICS_FILE), &cfg.ks, &report.epochs)?;
    io::write_final_metrics(&dir.join(FINAL_METRICS_CSV), &dir.join(FINAL_METRICS_JSON), report.final_recall())?;
    if let Some(bank) = &outcome.model.bank {
        io::export_centers_csv(&dir.join(CENTERS_FILE), &outcome.class_ids, bank.raw_centers())?;
    }
    checkpoint::save(&dir.join(CHECKPOINT_FILE), &outcome.model)?;
    if outcome.eval_embeddings.cols() == 2 {
        io::export_scatter_2d(&outcome.eval_embeddings, &outcome.eval_labels, &dir.join(SCATTER_STEM))?;
    }
    Ok(TrainRun { dir, report, outcome })
}

/// Runs the gradient suite; the caller decides the exit status.
pub fn cmd_gradcheck(seed: u64, trials: usize) -> Result<Vec<TrialReport>> {
    Ok(gradcheck::run_suite(seed, trials, GradCheckOptions::default())?)
}

/// One row per loss: trials, worst relative error, pass flag.
pub fn gradcheck_table(reports: &[TrialReport]) -> String {
    let mut out = format!("{:<22} {:>6} {:>14}  {}\n", "loss", "trials", "max_rel_error", "result");
    for kind in gradcheck::LossKind::ALL {
        let rows: Vec<&TrialReport> = reports.iter().filter(|r| r.loss == kind).collect();
        if rows.is_empty() {
            continue;
        }
        let worst = rows.iter().map(|r| r.max_relative_error()).fold(0.0, f64::max);
        let ok = rows.iter().all(|r| r.passed);
        out.push_str(&format!(
            "{:<22} {:>6} {:>14.3e}  {}\n",
            kind.name(),
            rows.len(),
            worst,
            if ok { "PASS" } else { "FAIL" }
        ));
    }
    out
}

/// Maps `f` over `items` on up to `available_parallelism` worker threads,
/// keeping input order. Each item runs single-threaded.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn final_recall_at_1(run: &TrainRun) -> f64 {
    run.report.final_recall().first().map_or(f64::NAN, |r| r.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub m: f64,
    #[serde(rename = "recall@1")]
    pub recall_at_1: f64,
}

/// Directory holding the summary of a sweep or noise study over `cfg`.
pub fn study_dir(out_dir: &Path, name: &str, cfg: &TrainConfig) -> PathBuf {
    out_dir.join(format!("{name}-{}-seed{}", config_hash(cfg), cfg.seed))
}

/// One training run per `(lambda, m)` cell, λ-major. Writes `sweep.csv`
/// and `sweep.svg` into the study directory.
pub fn cmd_sweep(cfg: &TrainConfig, lambdas: &[f64], ms: &[f64], out_dir: &Path) -> Result<(PathBuf, Vec<SweepRow>)> {
    if lambdas.is_empty() {
        return Err(ConfigError::new("lambda_grid", "must not be empty").into());
    }
    if ms.is_empty() {
        return Err(ConfigError::new("m_grid", "must not be empty").into());
    }
    let cells: Vec<(f64, f64)> = lambdas.iter().flat_map(|&l| ms.iter().map(move |&m| (l, m))).collect();
    let configs: Vec<TrainConfig> = cells
        .iter()
        .map(|&(lambda, m)| {
            let c = TrainConfig { lambda, m, ..cfg.clone() };
            c.validate().map(|_| c)
        })
        .collect::<std::result::Result<_, _>>()?;
    let rows = parallel_map(&configs, |c| {
        let run = cmd_train(c, out_dir)?;
        Ok(SweepRow { lambda: c.lambda, m: c.m, recall_at_1: final_recall_at_1(&run) })
    })?;

    let dir = study_dir(out_dir, "sweep", cfg);
    io::create_dir(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::error::LabError::io(&dir, e))?;
    let grid: Vec<Vec<f64>> = rows.chunks(ms.len()).map(|c| c.iter().map(|r| r.recall_at_1).collect()).collect();
    io::write_text(&dir.join("sweep.svg"), &io::render_heat_grid("Recall@1", "lambda", lambdas, "m", ms, &grid))?;
    Ok((dir, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRow {
    pub loss: String,
    /// `none` for the clean baseline.
    pub kind: String,
    pub rate: f64,
    #[serde(rename = "recall@1")]
    pub recall_at_1: f64,
}

/// Settings each loss runs with in the noise study: ccl uses `m = 0`,
/// `lambda = 2`; the others drop every ccl-only knob.
pub fn noise_study_config(base: &TrainConfig, loss: LossName) -> TrainConfig {
    let mut c = base.clone();
    c.loss = loss;
    c.m = 0.0;
    if loss == LossName::Ccl {
        c.lambda = 2.0;
    } else {
        c.lambda = 0.0;
        c.epsilon = 0.0;
        c.center_mode = CenterModeName::Gradient;
        c.mu = None;
        c.renormalize = false;
    }
    c
}

fn kind_name(kind: NoiseKindName) -> &'static str {
    match kind {
        NoiseKindName::Symmetric => "symmetric",
        NoiseKindName::LongTail => "long_tail",
    }
}

/// Per loss: one clean baseline plus one run per `(kind, rate)`. Writes
/// `noise_study.csv` into the study directory.
pub fn cmd_noise_study(
    cfg: &TrainConfig,
    rates: &[f64],
    kinds: &[NoiseKindName],
    losses: &[LossName],
    out_dir: &Path,
) -> Result<(PathBuf, Vec<NoiseRow>)> {
    if let Some(bad) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(ConfigError::new("rates", format!("{bad} is outside [0, 1]")).into());
    }
    if losses.is_empty() {
        return Err(ConfigError::new("losses", "must not be empty").into());
    }
    let subclusters = cfg.noise.as_ref().map_or(5, |n| n.subclusters);
    let mut jobs: Vec<(String, TrainConfig)> = Vec::new();
    for &loss in losses {
        let base = TrainConfig { noise: None, ..noise_study_config(cfg, loss) };
        base.validate()?;
        jobs.push(("none".to_owned(), base.clone()));
        for &kind in kinds {
            for &rate in rates {
                let noise = Some(NoiseConfig { kind, rate, subclusters, seed: None });
                jobs.push((kind_name(kind).to_owned(), TrainConfig { noise, ..base.clone() }));
            }
        }
    }
    let rows = parallel_map(&jobs, |(kind, c)| {
        let run = cmd_train(c, out_dir)?;
        let rate = c.noise.as_ref().map_or(0.0, |n| n.rate);
        Ok(NoiseRow { loss: c.loss.as_str().to_owned(), kind: kind.clone(), rate, recall_at_1: final_recall_at_1(&run) })
    })?;
    let dir = study_dir(out_dir, "noise", cfg);
    io::create_dir(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("noise_study.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| crate::error::LabError::io(&dir, e))?;
    Ok((dir, rows))
}

/// IDX inputs and run settings for the two-dimensional MNIST embedding.
#[derive(Debug, Clone)]
pub struct Mnist2dArgs {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub loss: LossName,
    pub epochs: usize,
    pub seed: u64,
}

/// Loss weight of the Euclidean center term for the `center_loss` variant.
pub const MNIST2D_CENTER_LOSS_LAMBDA: f64 = 0.01;

/// 784-256-2 encoder, AdamW at its default settings, batch 128, `s = 16`.
/// ccl runs with `m = 0`, `lambda = 2`.
pub fn mnist2d_config(args: &Mnist2dArgs) -> Result<TrainConfig> {
    let lambda = match args.loss {
        LossName::Ccl => 2.0,
        LossName::CenterLoss => MNIST2D_CENTER_LOSS_LAMBDA,
        LossName::Nsoftmax | LossName::CrossEntropy => 0.0,
        other => {
            return Err(ConfigError::new(
                "loss",
                format!("{} is not one of ccl, nsoftmax, cross_entropy, center_loss", other.as_str()),
            )
            .into())
        }
    };
    let cfg = TrainConfig {
        loss: args.loss,
        s: 16.0,
        m: 0.0,
        lambda,
        epsilon: 0.0,
        center_mode: CenterModeName::Gradient,
        mu: None,
        renormalize: false,
        layer_dims: vec![784, 256, 2],
        dropout: 0.0,
        optimizer: OptimizerConfig {
            kind: OptimizerName::Adamw,
            learning_rate: 1e-3,
            momentum: 0.9,
            weight_decay: 0.01,
            betas: (0.9, 0.999),
            eps: 1e-8,
        },
        batch_size: 128,
        epochs: args.epochs,
        seed: args.seed,
        dataset: DatasetConfig::Mnist {
            images: args.images.clone(),
            labels: args.labels.clone(),
            test_images: args.test_images.clone(),
            test_labels: args.test_labels.clone(),
            holdout: 0.2,
        },
        noise: None,
        ks: vec![1, 2, 4],
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Trains the 2-D embedding and writes raw and unit-norm scatter plots
/// (`scatter_raw.*`, `scatter_unit.*`) plus `geometry.json`.
pub fn cmd_mnist2d(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainRun> {
    if cfg.layer_dims.last() != Some(&2) {
        return Err(ConfigError::new("layer_dims", "mnist2d needs a 2-dimensional embedding").into());
    }
    let run = cmd_train(cfg, out_dir)?;
    let emb = &run.outcome.eval_embeddings;
    io::export_scatter_2d(emb, &run.outcome.eval_labels, &run.dir.join("scatter_raw"))?;
    let unit = numkernel::l2_normalize_rows(emb)?;
    io::export_scatter_2d(&unit, &run.outcome.eval_labels, &run.dir.join("scatter_unit"))?;
    io::write_text(&run.dir.join("geometry.json"), &serde_json::to_string_pretty(&run.report.final_geometry)?)?;
    Ok(run)
}
