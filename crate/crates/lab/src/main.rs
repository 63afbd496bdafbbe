use std::path::PathBuf;
use std::process::ExitCode;

use ccl_lab::commands::{self, Mnist2dArgs, Overrides};
use ccl_lab::config::{LossName, NoiseKindName, TrainConfig};
use ccl_lab::error::{LabError, Result};
use clap::{Args, Parser, Subcommand};

/// Center contrastive loss laboratory.
#[derive(Parser)]
#[command(name = "ccl-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON training config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent of the per-run directories.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { lambda: self.lambda, m: self.m, seed: self.seed }
    }

    fn load(&self) -> Result<TrainConfig> {
        let path = self.config.as_ref().ok_or_else(|| ccl_lab::config::ConfigError::new("config", "--config is required"))?;
        let mut cfg = TrainConfig::load(path)?;
        self.overrides().apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_loss(s: &str) -> std::result::Result<LossName, String> {
    LossName::parse(s).ok_or_else(|| format!("unknown loss {s:?}"))
}

fn parse_kind(s: &str) -> std::result::Result<NoiseKindName, String> {
    match s {
        "symmetric" => Ok(NoiseKindName::Symmetric),
        "long_tail" | "long-tail" => Ok(NoiseKindName::LongTail),
        _ => Err(format!("unknown noise kind {s:?}")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Compare analytic and finite-difference gradients of every loss.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Recall@1 over a lambda x m grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0, 1.5, 2.0])]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.1, 0.2, 0.3, 0.4])]
        ms: Vec<f64>,
    },
    /// Recall@1 per loss under injected label noise.
    NoiseStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2])]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "symmetric")]
        kinds: Vec<NoiseKindName>,
        #[arg(long, value_delimiter = ',', value_parser = parse_loss, default_value = "ccl,nsoftmax,infonce-batch")]
        losses: Vec<LossName>,
    },
    /// Two-dimensional MNIST embedding with scatter plots.
    Mnist2d {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "config")]
        images: Option<PathBuf>,
        #[arg(long, required_unless_present = "config")]
        labels: Option<PathBuf>,
        #[arg(long, requires = "test_labels")]
        test_images: Option<PathBuf>,
        #[arg(long, requires = "test_images")]
        test_labels: Option<PathBuf>,
        #[arg(long, value_parser = parse_loss, default_value = "ccl")]
        loss: LossName,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
}

fn print_recall(report: &ccl_lab::report::RunReport) {
    for r in report.final_recall() {
        println!("recall@{} = {:.4}", r.k, r.value);
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { common } => {
            let cfg = common.load()?;
            let run = commands::cmd_train(&cfg, &common.out_dir)?;
            println!("run directory: {}", run.dir.display());
            print_recall(&run.report);
        }
        Command::Gradcheck { common, trials } => {
            let seed = match &common.config {
                Some(_) => common.load()?.seed,
                None => common.seed.unwrap_or(0),
            };
            let reports = commands::cmd_gradcheck(seed, trials)?;
            print!("{}", commands::gradcheck_table(&reports));
            if reports.iter().any(|r| !r.passed) {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Sweep { common, lambdas, ms } => {
            let cfg = common.load()?;
            let lambdas = common.lambda.map_or(lambdas, |l| vec![l]);
            let ms = common.m.map_or(ms, |m| vec![m]);
            let (dir, rows) = commands::cmd_sweep(&cfg, &lambdas, &ms, &common.out_dir)?;
            println!("lambda,m,recall@1");
            for r in rows {
                println!("{},{},{}", r.lambda, r.m, r.recall_at_1);
            }
            println!("summary: {}", dir.display());
        }
        Command::NoiseStudy { common, rates, kinds, losses } => {
            let cfg = common.load()?;
            let (dir, rows) = commands::cmd_noise_study(&cfg, &rates, &kinds, &losses, &common.out_dir)?;
            println!("loss,kind,rate,recall@1");
            for r in rows {
                println!("{},{},{},{}", r.loss, r.kind, r.rate, r.recall_at_1);
            }
            println!("summary: {}", dir.display());
        }
        Command::Mnist2d { common, images, labels, test_images, test_labels, loss, epochs } => {
            let cfg = match (&common.config, images, labels) {
                (Some(_), _, _) => common.load()?,
                (None, Some(images), Some(labels)) => {
                    let args =
                        Mnist2dArgs { images, labels, test_images, test_labels, loss, epochs, seed: common.seed.unwrap_or(0) };
                    commands::mnist2d_config(&args)?
                }
                _ => unreachable!("clap requires the IDX paths without --config"),
            };
            let run = commands::cmd_mnist2d(&cfg, &common.out_dir)?;
            let g = &run.report.final_geometry;
            println!("run directory: {}", run.dir.display());
            print_recall(&run.report);
            println!("mean intra-class cosine = {:.4}", g.mean_intra_class_cosine);
            println!("radius mean = {:.4}, std = {:.4}", g.radius_mean, g.radius_std);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => run(cli).unwrap_or_else(|e: LabError| {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
