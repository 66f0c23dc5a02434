//! Experiment harness: the training loop, metrics emission, checkpoint
//! evaluation, and the gradient-check and orthogonality-drift experiments.
//!
//! Everything a run does is a deterministic function of its config and seed.
//! Independent RNG streams are derived per purpose (model init, training
//! data, evaluation data, epoch shuffling), so re-running any subcommand
//! reproduces its metrics byte for byte, wall-clock column aside.

pub mod config;
mod gradcheck;

pub use config::{
    preset, ExperimentConfig, ModelKind, Precision, TaskKind, DATA_ROOT_ENV, PRESET_NAMES,
};
pub use gradcheck::{gradcheck, gradcheck_with_fault, Fault, GradCheckReport};

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::activations::{mse, softmax_xent};
use crate::checkpoint::{self, Checkpoint};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::lstm::{lstm_backward, lstm_forward, LstmCell, LstmGrads, LstmOptimizers};
use crate::network::{
    sco_backward, sco_forward, OutputMode, ParamGrads, ScoCell, ScoOptimizers,
};
use crate::optim::ParamGroup;
use crate::stiefel::{self, DriftPoint};
use crate::tasks::{self, LossKind, TaskBatch, Targets};

const MODEL_STREAM: u64 = 0x01;
const DATA_STREAM: u64 = 0x02;
const EVAL_STREAM: u64 = 0x03;
const SHUFFLE_STREAM: u64 = 0x04;

/// Derives an independent stream seed (splitmix64 finalizer over the pair).
pub fn derive_stream_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, stream))
}

/// One metrics record: iteration (or epoch), training loss, the task's
/// evaluation metric, the orthogonality score of the recurrent matrix, and
/// wall-clock seconds in a separate trailing column.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub iteration: u64,
    pub train_loss: f64,
    pub eval_metric: f64,
    pub ortho_score: f64,
    pub elapsed_s: f64,
}

pub const METRICS_SCHEMA: &str = "metrics_schema,v1";
pub const METRICS_HEADER: &str = "iteration,train_loss,eval_metric,ortho_score,elapsed_s";

struct MetricsWriter {
    file: BufWriter<fs::File>,
}

impl MetricsWriter {
    fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(fs::File::create(path)?);
        writeln!(file, "{METRICS_SCHEMA}")?;
        writeln!(file, "{METRICS_HEADER}")?;
        Ok(MetricsWriter { file })
    }

    fn write_row(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(
            self.file,
            "{},{},{},{},{:.3}",
            row.iteration, row.train_loss, row.eval_metric, row.ortho_score, row.elapsed_s
        )?;
        self.file.flush()?;
        Ok(())
    }
}

/// Outcome of a full run.
#[derive(Debug)]
pub struct RunSummary {
    pub rows: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
}

#[derive(Debug)]
pub struct StepStats {
    pub loss: f64,
    pub hidden_norms: Option<Vec<f64>>,
    /// False when the loss came out non-finite and no update was applied.
    pub applied: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalStats {
    pub loss: f64,
    /// Classification accuracy, for tasks scored by argmax.
    pub accuracy: Option<f64>,
}

pub enum ModelState {
    Sco { cell: ScoCell, opt: ScoOptimizers },
    Lstm { cell: LstmCell, opt: LstmOptimizers },
}

/// Input and output widths per task.
pub fn task_io_sizes(task: TaskKind) -> (usize, usize) {
    match task {
        TaskKind::Copying => (tasks::COPYING_CLASSES, tasks::COPYING_CLASSES),
        TaskKind::Adding => (2, 1),
        TaskKind::Mnist | TaskKind::MnistPermuted => (1, 10),
    }
}

/// A model plus its per-group optimizers, driven batch by batch.
pub struct Trainer {
    model: ModelState,
}

impl Trainer {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let mut rng = stream_rng(cfg.seed, MODEL_STREAM);
        let (m, p) = task_io_sizes(cfg.task);
        let model = match cfg.model {
            ModelKind::Scornn => {
                let cell = ScoCell::init(cfg.n, m, p, cfg.rho, &mut rng)?;
                let opt = ScoOptimizers {
                    input: ParamGroup::new("input_weights", cfg.optimizer, cfg.lr)?,
                    skew: ParamGroup::new("skew", cfg.optimizer_recurrent, cfg.lr_recurrent)?,
                    modrelu_bias: ParamGroup::new("modrelu_bias", cfg.optimizer, cfg.lr)?,
                    output: ParamGroup::new("output_weights", cfg.optimizer, cfg.lr)?,
                    output_bias: ParamGroup::new("output_bias", cfg.optimizer, cfg.lr)?,
                };
                ModelState::Sco { cell, opt }
            }
            ModelKind::Lstm => {
                let cell = LstmCell::init(cfg.n, m, p, cfg.forget_bias, &mut rng)?;
                let opt = LstmOptimizers {
                    input: ParamGroup::new("input_weights", cfg.optimizer, cfg.lr)?,
                    recurrent: ParamGroup::new("recurrent_weights", cfg.optimizer, cfg.lr)?,
                    gate_bias: ParamGroup::new("gate_bias", cfg.optimizer, cfg.lr)?,
                    output: ParamGroup::new("output_weights", cfg.optimizer, cfg.lr)?,
                    output_bias: ParamGroup::new("output_bias", cfg.optimizer, cfg.lr)?,
                };
                ModelState::Lstm { cell, opt }
            }
        };
        Ok(Trainer { model })
    }

    pub fn from_checkpoint(ckpt: Checkpoint, cfg: &ExperimentConfig) -> Result<Self> {
        let model = match ckpt {
            Checkpoint::Sco { cell, optim } => {
                let opt = match optim {
                    Some(o) => o,
                    None => ScoOptimizers {
                        input: ParamGroup::new("input_weights", cfg.optimizer, cfg.lr)?,
                        skew: ParamGroup::new("skew", cfg.optimizer_recurrent, cfg.lr_recurrent)?,
                        modrelu_bias: ParamGroup::new("modrelu_bias", cfg.optimizer, cfg.lr)?,
                        output: ParamGroup::new("output_weights", cfg.optimizer, cfg.lr)?,
                        output_bias: ParamGroup::new("output_bias", cfg.optimizer, cfg.lr)?,
                    },
                };
                ModelState::Sco { cell, opt }
            }
            Checkpoint::Lstm { cell, optim } => {
                let opt = match optim {
                    Some(o) => o,
                    None => LstmOptimizers {
                        input: ParamGroup::new("input_weights", cfg.optimizer, cfg.lr)?,
                        recurrent: ParamGroup::new("recurrent_weights", cfg.optimizer, cfg.lr)?,
                        gate_bias: ParamGroup::new("gate_bias", cfg.optimizer, cfg.lr)?,
                        output: ParamGroup::new("output_weights", cfg.optimizer, cfg.lr)?,
                        output_bias: ParamGroup::new("output_bias", cfg.optimizer, cfg.lr)?,
                    },
                };
                ModelState::Lstm { cell, opt }
            }
        };
        Ok(Trainer { model })
    }

    pub fn model(&self) -> &ModelState {
        &self.model
    }

    pub fn num_params(&self) -> usize {
        match &self.model {
            ModelState::Sco { cell, .. } => cell.num_params(),
            ModelState::Lstm { cell, .. } => cell.num_params(),
        }
    }

    /// Orthogonality score of the recurrent matrix; `None` for models that
    /// do not maintain one.
    pub fn ortho_score(&self) -> Option<f64> {
        match &self.model {
            ModelState::Sco { cell, .. } => Some(stiefel::orthogonality_score(cell.recurrent())),
            ModelState::Lstm { .. } => None,
        }
    }

    /// Forward, loss, backward, optimizer step. When the loss comes out
    /// non-finite no update is applied and `applied` is false; the caller
    /// decides how to abort.
    pub fn train_batch(&mut self, batch: &TaskBatch, capture_norms: bool) -> Result<StepStats> {
        match &mut self.model {
            ModelState::Sco { cell, opt } => {
                let (loss, grads) = sco_batch_grads(cell, batch, capture_norms)?;
                let applied = loss.is_finite();
                let hidden_norms = grads.hidden_grad_norms.clone();
                if applied {
                    cell.apply_gradients(opt, &grads)?;
                }
                Ok(StepStats {
                    loss,
                    hidden_norms,
                    applied,
                })
            }
            ModelState::Lstm { cell, opt } => {
                let (loss, grads) = lstm_batch_grads(cell, batch, capture_norms)?;
                let applied = loss.is_finite();
                let hidden_norms = grads.hidden_grad_norms.clone();
                if applied {
                    cell.apply_gradients(opt, &grads)?;
                }
                Ok(StepStats {
                    loss,
                    hidden_norms,
                    applied,
                })
            }
        }
    }

    pub fn eval_batch(&self, batch: &TaskBatch) -> Result<EvalStats> {
        let mode = output_mode(batch.loss);
        let outputs = match &self.model {
            ModelState::Sco { cell, .. } => sco_forward(cell, &batch.inputs, mode)?.0,
            ModelState::Lstm { cell, .. } => lstm_forward(cell, &batch.inputs, mode)?.0,
        };
        let (loss, _) = output_grads(&outputs, batch)?;
        let accuracy = match (&batch.targets, batch.loss) {
            (Targets::FinalClasses(classes), LossKind::FinalCrossEntropy) => {
                let y = &outputs[0];
                let mut correct = 0usize;
                for (r, &target) in classes.iter().enumerate() {
                    let row = y.row(r);
                    let pred = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                        .map(|(i, _)| i)
                        .unwrap();
                    correct += usize::from(pred == target);
                }
                Some(correct as f64 / classes.len() as f64)
            }
            _ => None,
        };
        Ok(EvalStats { loss, accuracy })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match &self.model {
            ModelState::Sco { cell, opt } => Checkpoint::Sco {
                cell: cell.clone(),
                optim: Some(opt.clone()),
            },
            ModelState::Lstm { cell, opt } => Checkpoint::Lstm {
                cell: cell.clone(),
                optim: Some(opt.clone()),
            },
        }
    }
}

pub(crate) fn output_mode(loss: LossKind) -> OutputMode {
    match loss {
        LossKind::SequenceCrossEntropy => OutputMode::PerStep,
        LossKind::FinalMse | LossKind::FinalCrossEntropy => OutputMode::LastStep,
    }
}

/// Loss and per-output gradients for a batch, in the layout the backward
/// passes expect.
pub(crate) fn output_grads(outputs: &[Matrix], batch: &TaskBatch) -> Result<(f64, Vec<Matrix>)> {
    match (&batch.targets, batch.loss) {
        (Targets::PerStepClasses(steps), LossKind::SequenceCrossEntropy) => {
            if outputs.len() != steps.len() {
                return Err(Error::shape(
                    "output_grads",
                    format!("{} outputs vs {} target steps", outputs.len(), steps.len()),
                ));
            }
            let t = outputs.len() as f64;
            let mut loss = 0.0;
            let mut grads = Vec::with_capacity(outputs.len());
            for (y, targets) in outputs.iter().zip(steps) {
                let (l, dy) = softmax_xent(y, targets)?;
                loss += l / t;
                grads.push(dy.scale(1.0 / t));
            }
            Ok((loss, grads))
        }
        (Targets::FinalScalars(targets), LossKind::FinalMse) => {
            let y = &outputs[0];
            if y.cols() != 1 {
                return Err(Error::shape(
                    "output_grads",
                    format!("scalar task with {} output columns", y.cols()),
                ));
            }
            let preds: Vec<f64> = (0..y.rows()).map(|r| y[(r, 0)]).collect();
            let (loss, dpred) = mse(&preds, targets)?;
            let dy = Matrix::from_fn(y.rows(), 1, |r, _| dpred[r]);
            Ok((loss, vec![dy]))
        }
        (Targets::FinalClasses(targets), LossKind::FinalCrossEntropy) => {
            let (loss, dy) = softmax_xent(&outputs[0], targets)?;
            Ok((loss, vec![dy]))
        }
        _ => Err(Error::InvalidArgument(
            "target kind does not match loss kind".into(),
        )),
    }
}

pub(crate) fn sco_batch_grads(
    cell: &ScoCell,
    batch: &TaskBatch,
    capture_norms: bool,
) -> Result<(f64, ParamGrads)> {
    let (outputs, tape) = sco_forward(cell, &batch.inputs, output_mode(batch.loss))?;
    let (loss, dys) = output_grads(&outputs, batch)?;
    let grads = sco_backward(cell, &tape, &dys, capture_norms)?;
    Ok((loss, grads))
}

pub(crate) fn sco_batch_loss(cell: &ScoCell, batch: &TaskBatch) -> Result<f64> {
    let (outputs, _) = sco_forward(cell, &batch.inputs, output_mode(batch.loss))?;
    Ok(output_grads(&outputs, batch)?.0)
}

pub(crate) fn lstm_batch_grads(
    cell: &LstmCell,
    batch: &TaskBatch,
    capture_norms: bool,
) -> Result<(f64, LstmGrads)> {
    let (outputs, tape) = lstm_forward(cell, &batch.inputs, output_mode(batch.loss))?;
    let (loss, dys) = output_grads(&outputs, batch)?;
    let grads = lstm_backward(cell, &tape, &dys, capture_norms)?;
    Ok((loss, grads))
}

pub(crate) fn lstm_batch_loss(cell: &LstmCell, batch: &TaskBatch) -> Result<f64> {
    let (outputs, _) = lstm_forward(cell, &batch.inputs, output_mode(batch.loss))?;
    Ok(output_grads(&outputs, batch)?.0)
}

struct NormsWriter {
    file: BufWriter<fs::File>,
}

impl NormsWriter {
    fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(fs::File::create(path)?);
        writeln!(file, "iteration,t,norm")?;
        Ok(NormsWriter { file })
    }

    fn write(&mut self, iteration: u64, norms: &[f64]) -> Result<()> {
        for (i, n) in norms.iter().enumerate() {
            writeln!(self.file, "{},{},{}", iteration, i + 1, n)?;
        }
        self.file.flush()?;
        Ok(())
    }
}

/// Trains to completion per the config, writing `metrics.csv`, the config
/// actually used, the optional `hidden_norms.csv` sidecar, and a final
/// checkpoint into the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_file_format())?;
    let start = Instant::now();
    match cfg.task {
        TaskKind::Copying => run_streamed(cfg, start),
        TaskKind::Adding | TaskKind::Mnist | TaskKind::MnistPermuted => run_epochs(cfg, start),
    }
}

fn ortho_column(trainer: &Trainer, cfg: &ExperimentConfig, row_index: u64) -> f64 {
    if cfg.ortho_every == 0 || row_index % cfg.ortho_every != 0 {
        return f64::NAN;
    }
    trainer.ortho_score().unwrap_or(f64::NAN)
}

fn finish(
    cfg: &ExperimentConfig,
    trainer: &Trainer,
    rows: Vec<MetricsRow>,
) -> Result<RunSummary> {
    let checkpoint_path = cfg.out_dir.join("final.ckpt");
    checkpoint::save(&checkpoint_path, &trainer.to_checkpoint())?;
    Ok(RunSummary {
        rows,
        metrics_path: cfg.out_dir.join("metrics.csv"),
        checkpoint_path,
    })
}

fn run_streamed(cfg: &ExperimentConfig, start: Instant) -> Result<RunSummary> {
    let mut trainer = Trainer::new(cfg)?;
    let mut data_rng = stream_rng(cfg.seed, DATA_STREAM);
    let mut eval_rng = stream_rng(cfg.seed, EVAL_STREAM);
    let eval_set = tasks::gen_copying(cfg.t, cfg.eval_batch, &mut eval_rng)?;

    let mut metrics = MetricsWriter::create(&cfg.out_dir.join("metrics.csv"))?;
    let mut norms_writer = if cfg.hidden_norms_every > 0 {
        Some(NormsWriter::create(&cfg.out_dir.join("hidden_norms.csv"))?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut row_index = 0u64;

    let initial = trainer.eval_batch(&eval_set)?;
    let row = MetricsRow {
        iteration: 0,
        train_loss: f64::NAN,
        eval_metric: initial.loss,
        ortho_score: ortho_column(&trainer, cfg, row_index),
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    metrics.write_row(&row)?;
    rows.push(row);

    for iteration in 1..=cfg.iterations {
        let batch = tasks::gen_copying(cfg.t, cfg.batch, &mut data_rng)?;
        let capture = cfg.hidden_norms_every > 0 && iteration % cfg.hidden_norms_every == 0;
        let stats = trainer.train_batch(&batch, capture)?;
        let last_train_loss = stats.loss;
        if let (Some(w), Some(norms)) = (norms_writer.as_mut(), stats.hidden_norms.as_ref()) {
            w.write(iteration, norms)?;
        }
        if !stats.applied {
            let diag = MetricsRow {
                iteration,
                train_loss: stats.loss,
                eval_metric: f64::NAN,
                ortho_score: f64::NAN,
                elapsed_s: start.elapsed().as_secs_f64(),
            };
            metrics.write_row(&diag)?;
            return Err(Error::NonFiniteLoss { iteration });
        }
        if iteration % cfg.eval_every == 0 {
            row_index += 1;
            let eval = trainer.eval_batch(&eval_set)?;
            let row = MetricsRow {
                iteration,
                train_loss: last_train_loss,
                eval_metric: eval.loss,
                ortho_score: ortho_column(&trainer, cfg, row_index),
                elapsed_s: start.elapsed().as_secs_f64(),
            };
            metrics.write_row(&row)?;
            rows.push(row);
        }
    }
    finish(cfg, &trainer, rows)
}

enum EpochData {
    Adding {
        data_seed: u64,
    },
    Mnist {
        train: tasks::MnistDataset,
        test: tasks::MnistDataset,
        train_count: usize,
    },
}

/// First 55,000 training images train; the remaining 5,000 are held out as
/// an optional validation split.
pub const MNIST_TRAIN_SPLIT: usize = 55_000;

fn run_epochs(cfg: &ExperimentConfig, start: Instant) -> Result<RunSummary> {
    let mut trainer = Trainer::new(cfg)?;
    let data = match cfg.task {
        TaskKind::Adding => EpochData::Adding {
            data_seed: derive_stream_seed(cfg.seed, DATA_STREAM),
        },
        TaskKind::Mnist | TaskKind::MnistPermuted => {
            let mut train = tasks::load_mnist(
                cfg.mnist_images.as_ref().unwrap(),
                cfg.mnist_labels.as_ref().unwrap(),
            )?;
            let mut test = tasks::load_mnist(
                cfg.mnist_test_images.as_ref().unwrap(),
                cfg.mnist_test_labels.as_ref().unwrap(),
            )?;
            if cfg.task == TaskKind::MnistPermuted {
                train = train.apply_permutation(cfg.permutation_seed);
                test = test.apply_permutation(cfg.permutation_seed);
            }
            let train_count = train.len().min(MNIST_TRAIN_SPLIT);
            EpochData::Mnist {
                train,
                test,
                train_count,
            }
        }
        TaskKind::Copying => unreachable!("copying runs streamed"),
    };

    let train_count = match &data {
        EpochData::Adding { .. } => cfg.train_size,
        EpochData::Mnist { train_count, .. } => *train_count,
    };

    let mut metrics = MetricsWriter::create(&cfg.out_dir.join("metrics.csv"))?;
    let mut norms_writer = if cfg.hidden_norms_every > 0 {
        Some(NormsWriter::create(&cfg.out_dir.join("hidden_norms.csv"))?)
    } else {
        None
    };
    let mut shuffle_rng = stream_rng(cfg.seed, SHUFFLE_STREAM);
    let mut rows = Vec::new();

    let eval0 = evaluate_test_set(&trainer, cfg, &data)?;
    let row = MetricsRow {
        iteration: 0,
        train_loss: f64::NAN,
        eval_metric: eval0,
        ortho_score: ortho_column(&trainer, cfg, 0),
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    metrics.write_row(&row)?;
    rows.push(row);

    let mut iteration = 0u64;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_count).collect();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0u64;
        for chunk in order.chunks(cfg.batch) {
            let batch = build_train_batch(cfg, &data, chunk)?;
            iteration += 1;
            let capture = cfg.hidden_norms_every > 0 && iteration % cfg.hidden_norms_every == 0;
            let stats = trainer.train_batch(&batch, capture)?;
            if let (Some(w), Some(norms)) = (norms_writer.as_mut(), stats.hidden_norms.as_ref()) {
                w.write(iteration, norms)?;
            }
            if !stats.applied {
                let diag = MetricsRow {
                    iteration,
                    train_loss: stats.loss,
                    eval_metric: f64::NAN,
                    ortho_score: f64::NAN,
                    elapsed_s: start.elapsed().as_secs_f64(),
                };
                metrics.write_row(&diag)?;
                return Err(Error::NonFiniteLoss { iteration });
            }
            loss_sum += stats.loss;
            batches += 1;
        }
        let eval = evaluate_test_set(&trainer, cfg, &data)?;
        let row = MetricsRow {
            iteration: epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            eval_metric: eval,
            ortho_score: ortho_column(&trainer, cfg, epoch),
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        metrics.write_row(&row)?;
        rows.push(row);
    }
    finish(cfg, &trainer, rows)
}

fn build_train_batch(
    cfg: &ExperimentConfig,
    data: &EpochData,
    indices: &[usize],
) -> Result<TaskBatch> {
    match data {
        EpochData::Adding { data_seed } => tasks::gen_adding_indexed(cfg.t, *data_seed, indices),
        EpochData::Mnist { train, .. } => train.pixel_sequence_batch(indices),
    }
}

/// Test metric per task: MSE for adding, accuracy for MNIST.
fn evaluate_test_set(trainer: &Trainer, cfg: &ExperimentConfig, data: &EpochData) -> Result<f64> {
    match data {
        EpochData::Adding { data_seed } => {
            let mut weighted = 0.0;
            let mut total = 0usize;
            let test_indices: Vec<usize> =
                (cfg.train_size..cfg.train_size + cfg.test_size).collect();
            for chunk in test_indices.chunks(cfg.eval_batch) {
                let batch = tasks::gen_adding_indexed(cfg.t, *data_seed, chunk)?;
                let stats = trainer.eval_batch(&batch)?;
                weighted += stats.loss * chunk.len() as f64;
                total += chunk.len();
            }
            Ok(weighted / total as f64)
        }
        EpochData::Mnist { test, .. } => {
            let mut correct = 0.0;
            let mut total = 0usize;
            let indices: Vec<usize> = (0..test.len()).collect();
            for chunk in indices.chunks(cfg.eval_batch.min(256)) {
                let batch = test.pixel_sequence_batch(chunk)?;
                let stats = trainer.eval_batch(&batch)?;
                correct += stats.accuracy.unwrap_or(0.0) * chunk.len() as f64;
                total += chunk.len();
            }
            Ok(correct / total as f64)
        }
    }
}

/// Evaluates a checkpoint on its task's held-out data and writes a one-row
/// metrics file next to it.
pub fn eval_checkpoint(cfg: &ExperimentConfig, ckpt_path: &Path) -> Result<MetricsRow> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let start = Instant::now();
    let trainer = Trainer::from_checkpoint(checkpoint::load(ckpt_path)?, cfg)?;
    let eval_metric = match cfg.task {
        TaskKind::Copying => {
            let mut eval_rng = stream_rng(cfg.seed, EVAL_STREAM);
            let eval_set = tasks::gen_copying(cfg.t, cfg.eval_batch, &mut eval_rng)?;
            trainer.eval_batch(&eval_set)?.loss
        }
        TaskKind::Adding => {
            let data = EpochData::Adding {
                data_seed: derive_stream_seed(cfg.seed, DATA_STREAM),
            };
            evaluate_test_set(&trainer, cfg, &data)?
        }
        TaskKind::Mnist | TaskKind::MnistPermuted => {
            let mut test = tasks::load_mnist(
                cfg.mnist_test_images.as_ref().unwrap(),
                cfg.mnist_test_labels.as_ref().unwrap(),
            )?;
            if cfg.task == TaskKind::MnistPermuted {
                test = test.apply_permutation(cfg.permutation_seed);
            }
            let train_count = 0;
            let data = EpochData::Mnist {
                train: test.clone(),
                test,
                train_count,
            };
            evaluate_test_set(&trainer, cfg, &data)?
        }
    };
    let row = MetricsRow {
        iteration: 0,
        train_loss: f64::NAN,
        eval_metric,
        ortho_score: trainer.ortho_score().unwrap_or(f64::NAN),
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    let mut metrics = MetricsWriter::create(&cfg.out_dir.join("eval.csv"))?;
    metrics.write_row(&row)?;
    Ok(row)
}

/// Settings for the orthogonality-drift experiment.
#[derive(Debug, Clone)]
pub struct DriftConfig {
    pub n: usize,
    pub steps: u64,
    pub precision: Precision,
    pub lr: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            n: 128,
            steps: 10_000,
            precision: Precision::Single,
            lr: 1e-3,
            seed: 42,
            out: PathBuf::from("runs/orthodrift.csv"),
        }
    }
}

pub const DRIFT_HEADER: &str = "step,score_cayley,score_multiplicative,precision";

/// Runs both orthogonality-maintenance schemes side by side and writes the
/// per-step scores as CSV. `steps = 0` produces a header-only file.
pub fn orthodrift(cfg: &DriftConfig) -> Result<Vec<DriftPoint>> {
    let points = match cfg.precision {
        Precision::Double => stiefel::drift_experiment::<f64>(
            cfg.n,
            cfg.steps,
            cfg.lr,
            cfg.seed,
            ChaCha8Rng::seed_from_u64,
        )?,
        Precision::Single => stiefel::drift_experiment::<f32>(
            cfg.n,
            cfg.steps,
            cfg.lr,
            cfg.seed,
            ChaCha8Rng::seed_from_u64,
        )?,
    };
    if let Some(dir) = cfg.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut file = BufWriter::new(fs::File::create(&cfg.out)?);
    writeln!(file, "{DRIFT_HEADER}")?;
    for p in &points {
        writeln!(
            file,
            "{},{},{},{}",
            p.step,
            p.score_cayley,
            p.score_multiplicative,
            cfg.precision.name()
        )?;
    }
    file.flush()?;
    Ok(points)
}
