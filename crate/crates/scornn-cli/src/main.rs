//! Experiment CLI: `run` trains per a config or preset, `gradcheck`
//! verifies analytic gradients against finite differences, `orthodrift`
//! measures orthogonality decay of both maintenance schemes, and `eval`
//! scores a checkpoint on its task's held-out data.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use scornn::harness::{
    self, eval_checkpoint, orthodrift, preset, DriftConfig, ExperimentConfig, ModelKind,
    Precision, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "scornn",
    about = "Orthogonal recurrent network experiments via the scaled Cayley transform",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model to completion and emit metrics plus a checkpoint.
    Run(RunArgs),
    /// Check every analytic gradient against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Run the orthogonality-drift comparison and emit a CSV curve.
    Orthodrift(DriftArgs),
    /// Evaluate a checkpoint on its task's held-out data.
    Eval(EvalArgs),
}

/// Flags mirror the config keys; precedence is preset < config file < flag.
#[derive(Args)]
struct RunArgs {
    /// Named preset to start from (see --list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print available presets and exit.
    #[arg(long)]
    list_presets: bool,
    /// Dataset root for MNIST files (fallback: the SCORNN_DATA env var).
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    train_size: Option<String>,
    #[arg(long)]
    test_size: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    optimizer_recurrent: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lr_recurrent: Option<String>,
    #[arg(long)]
    forget_bias: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    mnist_images: Option<String>,
    #[arg(long)]
    mnist_labels: Option<String>,
    #[arg(long)]
    mnist_test_images: Option<String>,
    #[arg(long)]
    mnist_test_labels: Option<String>,
    #[arg(long)]
    permutation_seed: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    ortho_every: Option<String>,
    #[arg(long)]
    hidden_norms_every: Option<String>,
    #[arg(long)]
    eval_batch: Option<String>,
}

impl ConfigOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> anyhow::Result<()> {
        let pairs = [
            ("task", &self.task),
            ("model", &self.model),
            ("n", &self.n),
            ("rho", &self.rho),
            ("t", &self.t),
            ("batch", &self.batch),
            ("iterations", &self.iterations),
            ("epochs", &self.epochs),
            ("train_size", &self.train_size),
            ("test_size", &self.test_size),
            ("optimizer", &self.optimizer),
            ("optimizer_recurrent", &self.optimizer_recurrent),
            ("lr", &self.lr),
            ("lr_recurrent", &self.lr_recurrent),
            ("forget_bias", &self.forget_bias),
            ("seed", &self.seed),
            ("precision", &self.precision),
            ("out_dir", &self.out_dir),
            ("mnist_images", &self.mnist_images),
            ("mnist_labels", &self.mnist_labels),
            ("mnist_test_images", &self.mnist_test_images),
            ("mnist_test_labels", &self.mnist_test_labels),
            ("permutation_seed", &self.permutation_seed),
            ("eval_every", &self.eval_every),
            ("ortho_every", &self.ortho_every),
            ("hidden_norms_every", &self.hidden_norms_every),
            ("eval_batch", &self.eval_batch),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value = "scornn")]
    model: String,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    t: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    /// Fail unless every group beats this maximum relative error.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

#[derive(Args)]
struct DriftArgs {
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    steps: u64,
    #[arg(long, default_value = "single")]
    precision: String,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "runs/orthodrift.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint produced by `run`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

fn assemble_config(
    preset_name: &Option<String>,
    config_file: &Option<PathBuf>,
    data_root: &Option<PathBuf>,
    overrides: &ConfigOverrides,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match preset_name {
        Some(name) => preset(name)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = config_file {
        cfg.apply_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    overrides.apply(&mut cfg)?;
    cfg.resolve_dataset_paths(data_root.as_deref());
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            if args.list_presets {
                for name in PRESET_NAMES {
                    println!("{name}");
                }
                return Ok(());
            }
            let cfg = assemble_config(&args.preset, &args.config, &args.data_root, &args.overrides)?;
            let summary = harness::run(&cfg)?;
            let last = summary
                .rows
                .last()
                .context("run produced no metrics rows")?;
            println!(
                "done: {} rows, final eval_metric {}, metrics at {}, checkpoint at {}",
                summary.rows.len(),
                last.eval_metric,
                summary.metrics_path.display(),
                summary.checkpoint_path.display()
            );
        }
        Command::Gradcheck(args) => {
            let model = ModelKind::parse(&args.model)?;
            let report = harness::gradcheck(model, args.n, args.t, args.seed, args.step)?;
            print!("{}", report.render());
            if report.max_rel_error() >= args.tolerance {
                bail!(
                    "gradient check failed: max relative error {:.3e} >= tolerance {:.1e}",
                    report.max_rel_error(),
                    args.tolerance
                );
            }
            println!("all groups within tolerance {:.1e}", args.tolerance);
        }
        Command::Orthodrift(args) => {
            let cfg = DriftConfig {
                n: args.n,
                steps: args.steps,
                precision: Precision::parse(&args.precision)?,
                lr: args.lr,
                seed: args.seed,
                out: args.out,
            };
            let points = orthodrift(&cfg)?;
            match points.last() {
                Some(last) => println!(
                    "{} steps: final score_cayley {:.3e}, score_multiplicative {:.3e}, curve at {}",
                    points.len(),
                    last.score_cayley,
                    last.score_multiplicative,
                    cfg.out.display()
                ),
                None => println!("0 steps: header-only curve at {}", cfg.out.display()),
            }
        }
        Command::Eval(args) => {
            let cfg =
                assemble_config(&args.preset, &args.config, &args.data_root, &args.overrides)?;
            let row = eval_checkpoint(&cfg, &args.checkpoint)?;
            println!(
                "eval_metric {} (task {}, ortho_score {})",
                row.eval_metric,
                cfg.task.name(),
                row.ortho_score
            );
        }
    }
    Ok(())
}
