//! Experiment configuration: a flat key = value file format, CLI-friendly
//! setters, and the shipped presets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::optim::OptimizerKind;

/// Environment variable naming the default dataset root for MNIST files.
pub const DATA_ROOT_ENV: &str = "SCORNN_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Copying,
    Adding,
    Mnist,
    MnistPermuted,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Copying => "copying",
            TaskKind::Adding => "adding",
            TaskKind::Mnist => "mnist",
            TaskKind::MnistPermuted => "mnist-permuted",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "copying" => Ok(TaskKind::Copying),
            "adding" => Ok(TaskKind::Adding),
            "mnist" => Ok(TaskKind::Mnist),
            "mnist-permuted" => Ok(TaskKind::MnistPermuted),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }

    pub fn is_mnist(self) -> bool {
        matches!(self, TaskKind::Mnist | TaskKind::MnistPermuted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Scornn,
    Lstm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Scornn => "scornn",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scornn" => Ok(ModelKind::Scornn),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Double,
    Single,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Double => "double",
            Precision::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "double" | "f64" => Ok(Precision::Double),
            "single" | "f32" => Ok(Precision::Single),
            other => Err(Error::Config(format!("unknown precision '{other}'"))),
        }
    }
}

/// Full description of one experiment run. Every field maps to one config
/// key and one CLI flag of the same name.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub model: ModelKind,
    /// Hidden size n.
    pub n: usize,
    /// Count of -1 entries on the scaling diagonal.
    pub rho: usize,
    /// Sequence length T for the synthetic tasks.
    pub t: usize,
    pub batch: usize,
    /// Optimizer iterations for streamed tasks (copying).
    pub iterations: u64,
    /// Epochs for dataset tasks (adding, mnist).
    pub epochs: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Optimizer for input/output parameter groups.
    pub optimizer: OptimizerKind,
    /// Optimizer for the recurrent parameter group.
    pub optimizer_recurrent: OptimizerKind,
    pub lr: f64,
    pub lr_recurrent: f64,
    /// LSTM forget-gate bias initialization.
    pub forget_bias: f64,
    pub seed: u64,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub mnist_test_images: Option<PathBuf>,
    pub mnist_test_labels: Option<PathBuf>,
    pub permutation_seed: u64,
    /// Evaluation cadence in iterations for streamed tasks; dataset tasks
    /// evaluate once per epoch.
    pub eval_every: u64,
    /// Orthogonality-score cadence over metrics rows: 1 scores every row,
    /// k scores every k-th row, 0 disables scoring.
    pub ortho_every: u64,
    /// Hidden-gradient-norm capture cadence in optimizer iterations;
    /// 0 disables capture.
    pub hidden_norms_every: u64,
    /// Held-out batch size used to evaluate streamed tasks.
    pub eval_batch: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskKind::Copying,
            model: ModelKind::Scornn,
            n: 64,
            rho: 32,
            t: 200,
            batch: 128,
            iterations: 2000,
            epochs: 10,
            train_size: 100_000,
            test_size: 10_000,
            optimizer: OptimizerKind::RmsProp,
            optimizer_recurrent: OptimizerKind::RmsProp,
            lr: 1e-3,
            lr_recurrent: 1e-4,
            forget_bias: 1.0,
            seed: 42,
            precision: Precision::Double,
            out_dir: PathBuf::from("runs/experiment"),
            mnist_images: None,
            mnist_labels: None,
            mnist_test_images: None,
            mnist_test_labels: None,
            permutation_seed: 25,
            eval_every: 100,
            ortho_every: 1,
            hidden_norms_every: 0,
            eval_batch: 512,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` pair. Unknown keys are config errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("'{key}' expects an integer, got '{v}'")))
        };
        let parse_u64 = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("'{key}' expects an integer, got '{v}'")))
        };
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("'{key}' expects a number, got '{v}'")))
        };
        match key {
            "task" => self.task = TaskKind::parse(value)?,
            "model" => self.model = ModelKind::parse(value)?,
            "n" => self.n = parse_usize(value)?,
            "rho" => self.rho = parse_usize(value)?,
            "t" => self.t = parse_usize(value)?,
            "batch" => self.batch = parse_usize(value)?,
            "iterations" => self.iterations = parse_u64(value)?,
            "epochs" => self.epochs = parse_u64(value)?,
            "train_size" => self.train_size = parse_usize(value)?,
            "test_size" => self.test_size = parse_usize(value)?,
            "optimizer" => self.optimizer = OptimizerKind::parse(value)?,
            "optimizer_recurrent" => self.optimizer_recurrent = OptimizerKind::parse(value)?,
            "lr" => self.lr = parse_f64(value)?,
            "lr_recurrent" => self.lr_recurrent = parse_f64(value)?,
            "forget_bias" => self.forget_bias = parse_f64(value)?,
            "seed" => self.seed = parse_u64(value)?,
            "precision" => self.precision = Precision::parse(value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "mnist_images" => self.mnist_images = Some(PathBuf::from(value)),
            "mnist_labels" => self.mnist_labels = Some(PathBuf::from(value)),
            "mnist_test_images" => self.mnist_test_images = Some(PathBuf::from(value)),
            "mnist_test_labels" => self.mnist_test_labels = Some(PathBuf::from(value)),
            "permutation_seed" => self.permutation_seed = parse_u64(value)?,
            "eval_every" => self.eval_every = parse_u64(value)?,
            "ortho_every" => self.ortho_every = parse_u64(value)?,
            "hidden_norms_every" => self.hidden_norms_every = parse_u64(value)?,
            "eval_batch" => self.eval_batch = parse_usize(value)?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Reads a flat `key = value` config file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Serializes the config back to the flat file format, one key per line.
    pub fn to_file_format(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("task", self.task.name().into());
        kv.insert("model", self.model.name().into());
        kv.insert("n", self.n.to_string());
        kv.insert("rho", self.rho.to_string());
        kv.insert("t", self.t.to_string());
        kv.insert("batch", self.batch.to_string());
        kv.insert("iterations", self.iterations.to_string());
        kv.insert("epochs", self.epochs.to_string());
        kv.insert("train_size", self.train_size.to_string());
        kv.insert("test_size", self.test_size.to_string());
        kv.insert("optimizer", self.optimizer.name().into());
        kv.insert("optimizer_recurrent", self.optimizer_recurrent.name().into());
        kv.insert("lr", self.lr.to_string());
        kv.insert("lr_recurrent", self.lr_recurrent.to_string());
        kv.insert("forget_bias", self.forget_bias.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert("precision", self.precision.name().into());
        kv.insert("out_dir", self.out_dir.display().to_string());
        if let Some(p) = &self.mnist_images {
            kv.insert("mnist_images", p.display().to_string());
        }
        if let Some(p) = &self.mnist_labels {
            kv.insert("mnist_labels", p.display().to_string());
        }
        if let Some(p) = &self.mnist_test_images {
            kv.insert("mnist_test_images", p.display().to_string());
        }
        if let Some(p) = &self.mnist_test_labels {
            kv.insert("mnist_test_labels", p.display().to_string());
        }
        kv.insert("permutation_seed", self.permutation_seed.to_string());
        kv.insert("eval_every", self.eval_every.to_string());
        kv.insert("ortho_every", self.ortho_every.to_string());
        kv.insert("hidden_norms_every", self.hidden_norms_every.to_string());
        kv.insert("eval_batch", self.eval_batch.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Fills unset MNIST paths from the dataset root (the `SCORNN_DATA`
    /// environment variable or an explicit root).
    pub fn resolve_dataset_paths(&mut self, root: Option<&Path>) {
        if !self.task.is_mnist() {
            return;
        }
        let root = root
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from));
        if let Some(root) = root {
            self.mnist_images
                .get_or_insert_with(|| root.join("train-images-idx3-ubyte"));
            self.mnist_labels
                .get_or_insert_with(|| root.join("train-labels-idx1-ubyte"));
            self.mnist_test_images
                .get_or_insert_with(|| root.join("t10k-images-idx3-ubyte"));
            self.mnist_test_labels
                .get_or_insert_with(|| root.join("t10k-labels-idx1-ubyte"));
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if self.rho > self.n {
            return Err(Error::Config(format!(
                "rho = {} exceeds n = {}",
                self.rho, self.n
            )));
        }
        if self.batch == 0 || self.eval_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_recurrent > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        match self.task {
            TaskKind::Copying => {
                if self.t < 1 {
                    return Err(Error::Config("copying task needs t >= 1".into()));
                }
            }
            TaskKind::Adding => {
                if self.t < 4 {
                    return Err(Error::Config("adding task needs t >= 4".into()));
                }
                if self.train_size == 0 || self.test_size == 0 {
                    return Err(Error::Config("train/test sizes must be positive".into()));
                }
            }
            TaskKind::Mnist | TaskKind::MnistPermuted => {
                for (key, path) in [
                    ("mnist_images", &self.mnist_images),
                    ("mnist_labels", &self.mnist_labels),
                    ("mnist_test_images", &self.mnist_test_images),
                    ("mnist_test_labels", &self.mnist_test_labels),
                ] {
                    match path {
                        None => {
                            return Err(Error::Config(format!(
                                "{key} is required for MNIST runs (set it or {DATA_ROOT_ENV})"
                            )))
                        }
                        Some(p) if !p.exists() => {
                            return Err(Error::Config(format!(
                                "{key} path does not exist: {}",
                                p.display()
                            )))
                        }
                        _ => {}
                    }
                }
            }
        }
        if self.precision == Precision::Single {
            return Err(Error::Config(
                "training runs in double precision; 'single' applies to the orthodrift experiment"
                    .into(),
            ));
        }
        Ok(())
    }
}

/// Named presets for the shipped experiments. Desk-scale presets are sized
/// to finish on one CPU core; the paper-scale and stretch presets document
/// the full-size settings without being part of any gate.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    match name {
        // copying, T = 200: orthogonal cell clears the memoryless baseline,
        // the LSTM baseline sits on it
        "copying-desk" => {
            cfg.out_dir = PathBuf::from("runs/copying-desk");
        }
        "copying-desk-lstm" => {
            cfg.model = ModelKind::Lstm;
            cfg.n = 40;
            cfg.forget_bias = 1.0;
            cfg.out_dir = PathBuf::from("runs/copying-desk-lstm");
        }
        "adding-desk" => {
            cfg.task = TaskKind::Adding;
            cfg.epochs = 10;
            cfg.out_dir = PathBuf::from("runs/adding-desk");
        }
        "adding-desk-lstm" => {
            cfg.task = TaskKind::Adding;
            cfg.model = ModelKind::Lstm;
            cfg.n = 40;
            cfg.forget_bias = 2.0;
            cfg.epochs = 10;
            cfg.out_dir = PathBuf::from("runs/adding-desk-lstm");
        }
        "mnist-desk" => {
            cfg.task = TaskKind::Mnist;
            cfg.n = 128;
            cfg.rho = 13; // n/10, rounded
            cfg.epochs = 5;
            cfg.lr_recurrent = 1e-4;
            cfg.out_dir = PathBuf::from("runs/mnist-desk");
        }
        "mnist-permuted-desk" => {
            cfg.task = TaskKind::MnistPermuted;
            cfg.n = 128;
            cfg.rho = 64; // n/2 suits the long-range dependencies
            cfg.epochs = 5;
            cfg.lr_recurrent = 1e-4;
            cfg.out_dir = PathBuf::from("runs/mnist-permuted-desk");
        }
        // long-run stretch settings; hours of CPU time, not gated
        "mnist-stretch" => {
            cfg.task = TaskKind::Mnist;
            cfg.n = 170;
            cfg.rho = 17;
            cfg.epochs = 70;
            cfg.lr_recurrent = 1e-4;
            cfg.out_dir = PathBuf::from("runs/mnist-stretch");
        }
        "copying-paper-scale" => {
            cfg.n = 190;
            cfg.rho = 95;
            cfg.t = 1000;
            cfg.iterations = 4000;
            cfg.out_dir = PathBuf::from("runs/copying-paper-scale");
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (available: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    }
    Ok(cfg)
}

pub const PRESET_NAMES: &[&str] = &[
    "copying-desk",
    "copying-desk-lstm",
    "adding-desk",
    "adding-desk-lstm",
    "mnist-desk",
    "mnist-permuted-desk",
    "mnist-stretch",
    "copying-paper-scale",
];

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn config_file_round_trip() {
        let cfg = preset("adding-desk").unwrap();
        let text = cfg.to_file_format();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::File::create(&path)
            .unwrap()
            .write_all(text.as_bytes())
            .unwrap();
        let mut loaded = ExperimentConfig::default();
        loaded.apply_file(&path).unwrap();
        assert_eq!(loaded.task, TaskKind::Adding);
        assert_eq!(loaded.epochs, 10);
        assert_eq!(loaded.n, cfg.n);
        assert_eq!(loaded.lr_recurrent, cfg.lr_recurrent);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("no_such_key", "1").is_err());
        assert!(cfg.set("n", "sixty-four").is_err());
        assert!(cfg.set("task", "juggling").is_err());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.rho = cfg.n + 1;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.precision = Precision::Single;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.task = TaskKind::Mnist;
        assert!(cfg.validate().is_err(), "missing dataset paths");
    }

    #[test]
    fn all_presets_parse_and_non_mnist_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            if !cfg.task.is_mnist() {
                cfg.validate().unwrap();
            }
        }
    }
}
