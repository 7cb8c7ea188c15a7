//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Relative paths in a file are resolved against the file's
//! directory. Later assignments win, so command-line `--set` overrides are
//! applied after the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tlh_core::{Architecture, LabelMode, QuantizationSum, TrainConfig};

use crate::error::{io_err, CliError, Result};

pub const OUTPUT_DIR_ENV: &str = "TLH_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train_features: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub query_features: Option<PathBuf>,
    pub query_labels: Option<PathBuf>,
    pub database_features: Option<PathBuf>,
    pub database_labels: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Encoder checkpoint used by `encode`; defaults to the one `train` writes.
    pub encoder: Option<PathBuf>,
    /// Inferred from the label files when unset.
    pub label_mode: Option<LabelMode>,

    pub architecture: Architecture,
    pub hidden_dim: usize,
    pub code_length: usize,

    pub epochs: usize,
    pub triplets_per_epoch: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    /// Defaults to half the code length.
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub seed: u64,
    pub quantization_sum: QuantizationSum,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Defaults to the full ranking (single-label) or 5000 (multi-label).
    pub eval_k: Option<usize>,
    pub search_k: usize,

    pub alpha_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub train_size_grid: Vec<usize>,
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::new(12, 1, 1);
        Self {
            train_features: None,
            train_labels: None,
            query_features: None,
            query_labels: None,
            database_features: None,
            database_labels: None,
            output_dir: PathBuf::from("tlh-out"),
            encoder: None,
            label_mode: None,
            architecture: Architecture::Linear,
            hidden_dim: 0,
            code_length: 12,
            epochs: t.epochs,
            triplets_per_epoch: None,
            batch_size: None,
            learning_rate: t.learning_rate,
            lr_decay_factor: t.lr_decay_factor,
            lr_decay_every: t.lr_decay_every,
            alpha: None,
            lambda: t.lambda,
            seed: t.seed,
            quantization_sum: t.quantization,
            checkpoint_every: 0,
            eval_k: None,
            search_k: 100,
            alpha_grid: Vec::new(),
            lambda_grid: Vec::new(),
            train_size_grid: Vec::new(),
            parallel: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_core<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr<Err = tlh_core::Error>,
{
    value
        .parse()
        .map_err(|e: tlh_core::Error| CliError::usage(format!("{key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(CliError::usage(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "auto" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn join_list<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Assigns one key. Relative paths are joined onto `base` when given.
    pub fn set_relative(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let value = value.trim();
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        let opt_path = |v: &str| (!v.is_empty()).then(|| path(v));
        match key {
            "train_features" => self.train_features = opt_path(value),
            "train_labels" => self.train_labels = opt_path(value),
            "query_features" => self.query_features = opt_path(value),
            "query_labels" => self.query_labels = opt_path(value),
            "database_features" => self.database_features = opt_path(value),
            "database_labels" => self.database_labels = opt_path(value),
            "output_dir" => {
                if value.is_empty() {
                    return Err(CliError::usage("output_dir must not be empty"));
                }
                self.output_dir = path(value)
            }
            "encoder" => self.encoder = opt_path(value),
            "label_mode" => {
                self.label_mode = match value {
                    "" | "auto" => None,
                    v => Some(parse_core(key, v)?),
                }
            }
            "architecture" => self.architecture = parse_core(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "code_length" => self.code_length = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "triplets_per_epoch" => self.triplets_per_epoch = optional(key, value)?,
            "batch_size" => self.batch_size = optional(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, value)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, value)?,
            "alpha" => self.alpha = optional(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "quantization_sum" => self.quantization_sum = parse_core(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "eval_k" => self.eval_k = optional(key, value)?,
            "search_k" => self.search_k = parse(key, value)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, value)?,
            "lambda_grid" => self.lambda_grid = parse_list(key, value)?,
            "train_size_grid" => self.train_size_grid = parse_list(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            other => return Err(CliError::usage(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_relative(key, value, None)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("expected key=value, got {assignment:?}")))?;
        self.set(k.trim(), v)
    }

    pub fn parse_text(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!("config line {}: expected key = value", lineno + 1))
            })?;
            cfg.set_relative(k.trim(), v, base).map_err(|e| match e {
                CliError::Usage(msg) => CliError::usage(format!("config line {}: {msg}", lineno + 1)),
                e => e,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_text(&text, path.parent())
    }

    /// Serializes every key; `parse_text` of the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        put("train_features", opt_path(&self.train_features));
        put("train_labels", opt_path(&self.train_labels));
        put("query_features", opt_path(&self.query_features));
        put("query_labels", opt_path(&self.query_labels));
        put("database_features", opt_path(&self.database_features));
        put("database_labels", opt_path(&self.database_labels));
        put("output_dir", self.output_dir.display().to_string());
        put("encoder", opt_path(&self.encoder));
        put("label_mode", self.label_mode.map(|m| m.to_string()).unwrap_or("auto".into()));
        put("architecture", self.architecture.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("code_length", self.code_length.to_string());
        put("epochs", self.epochs.to_string());
        put("triplets_per_epoch", self.triplets_per_epoch.map(|v| v.to_string()).unwrap_or_default());
        put("batch_size", self.batch_size.map(|v| v.to_string()).unwrap_or_default());
        put("learning_rate", self.learning_rate.to_string());
        put("lr_decay_factor", self.lr_decay_factor.to_string());
        put("lr_decay_every", self.lr_decay_every.to_string());
        put("alpha", self.alpha.map(|v| v.to_string()).unwrap_or("auto".into()));
        put("lambda", self.lambda.to_string());
        put("seed", self.seed.to_string());
        put("quantization_sum", self.quantization_sum.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        put("eval_k", self.eval_k.map(|v| v.to_string()).unwrap_or("auto".into()));
        put("search_k", self.search_k.to_string());
        put("alpha_grid", join_list(&self.alpha_grid));
        put("lambda_grid", join_list(&self.lambda_grid));
        put("train_size_grid", join_list(&self.train_size_grid));
        put("parallel", self.parallel.to_string());
        s
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let m = self
            .triplets_per_epoch
            .ok_or_else(|| CliError::usage("triplets_per_epoch must be set"))?;
        let batch = self
            .batch_size
            .ok_or_else(|| CliError::usage("batch_size must be set"))?;
        let cfg = TrainConfig {
            epochs: self.epochs,
            triplets_per_epoch: m,
            batch_size: batch,
            learning_rate: self.learning_rate,
            lr_decay_factor: self.lr_decay_factor,
            lr_decay_every: self.lr_decay_every,
            alpha: self.alpha.unwrap_or(self.code_length as f64 / 2.0),
            lambda: self.lambda,
            seed: self.seed,
            quantization: self.quantization_sum,
        };
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn encoder_path(&self) -> PathBuf {
        self.encoder
            .clone()
            .unwrap_or_else(|| self.output_dir.join("encoder.enc"))
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        field
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("{key} must be set")))
    }
}
