//! Command-line front end for triplet-likelihood hashing experiments.
//!
//! Subcommands: `ingest`, `make-synthetic`, `train`, `encode`, `search`,
//! `eval` and `sweep`. The experiment subcommands read a flat `key = value`
//! configuration (see [`config`]) and write everything under its output
//! directory.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training diverged, 4 triplet sampling infeasible.

pub mod config;
pub mod error;
pub mod files;
pub mod ingest;
pub mod pipeline;
pub mod sweep;
pub mod synth;

use std::io::{self, BufReader};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tlh_core::synthetic::SyntheticConfig;
use tlh_core::LabelMode;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "tlh", version, about = "Supervised hashing from triplet labels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    /// Override one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Output directory; overrides the configuration file.
    #[arg(long, env = config::OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert `labels,f1,...,fD` text lines into a feature file and a label file.
    Ingest {
        /// Input text file, or `-` for stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Force single- or multi-label mode instead of inferring it.
        #[arg(long)]
        label_mode: Option<String>,
        /// Id of the first image; later images are numbered consecutively.
        #[arg(long, default_value_t = 0)]
        first_id: u64,
    },
    /// Write the Gaussian-cluster benchmark and a starter configuration.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Distance of each cluster centre from the origin, in units of sigma.
        #[arg(long, default_value_t = 4.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 5000)]
        train: usize,
        #[arg(long, default_value_t = 1000)]
        query: usize,
        #[arg(long, default_value_t = 10_000)]
        database: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train an encoder; writes encoder.enc, train_report.csv and checkpoints.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Suppress per-epoch progress on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Encode the query and database sets into packed codes.
    Encode {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Rank the database for every query; writes search.csv.
    Search {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Search queries on all cores (same output).
        #[arg(long)]
        parallel: bool,
    },
    /// Mean average precision of the encoded query set; writes eval.csv.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train/encode/evaluate across a grid; writes sweep_<dimension>.csv.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// alpha, lambda or train_size.
        #[arg(long)]
        dimension: String,
        /// Run grid points concurrently (same output).
        #[arg(long)]
        parallel: bool,
    },
}

fn label_mode(s: &Option<String>) -> Result<Option<LabelMode>> {
    s.as_deref()
        .map(|m| m.parse().map_err(|e: tlh_core::Error| CliError::usage(e.to_string())))
        .transpose()
}

/// Runs one subcommand, printing a short summary on stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            input,
            features,
            labels,
            label_mode: mode,
            first_id,
        } => {
            let mode = label_mode(&mode)?;
            let summary = if input.as_os_str() == "-" {
                ingest::run_ingest(io::stdin().lock(), &features, &labels, mode, first_id)?
            } else {
                let file = std::fs::File::open(&input).map_err(error::io_err(&input))?;
                ingest::run_ingest(BufReader::new(file), &features, &labels, mode, first_id)?
            };
            println!(
                "N={} D={} labels={} classes={}",
                summary.n, summary.d, summary.mode, summary.classes
            );
        }
        Command::MakeSynthetic {
            out,
            classes,
            dim,
            separation,
            sigma,
            train,
            query,
            database,
            seed,
        } => {
            let cfg = SyntheticConfig {
                classes,
                dim,
                separation,
                sigma,
                train,
                query,
                database,
                seed,
            };
            synth::run_make_synthetic(&cfg, &out)?;
            println!(
                "wrote train={train} query={query} database={database} to {}",
                out.display()
            );
        }
        Command::Train { cfg, quiet } => {
            let cfg = cfg.resolve()?;
            let outcome = pipeline::run_train(&cfg, !quiet)?;
            if let Some(last) = outcome.report.epochs.last() {
                println!(
                    "trained {} epochs: nll {:.5} qerr {:.5}; encoder at {}",
                    last.epoch,
                    last.nll_mean,
                    last.qerr_mean,
                    outcome.encoder_path.display()
                );
            }
        }
        Command::Encode { cfg } => {
            let cfg = cfg.resolve()?;
            for path in pipeline::run_encode(&cfg)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Search { cfg, parallel } => {
            let mut cfg = cfg.resolve()?;
            cfg.parallel |= parallel;
            let path = pipeline::run_search(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Eval { cfg } => {
            let cfg = cfg.resolve()?;
            let report = pipeline::run_eval(&cfg)?;
            println!(
                "MAP={:.6} k={} queries={} N={} L={}",
                report.map,
                report.k,
                report.per_query.len(),
                report.n,
                report.bits
            );
        }
        Command::Sweep {
            cfg,
            dimension,
            parallel,
        } => {
            let mut cfg = cfg.resolve()?;
            cfg.parallel |= parallel;
            let dim: sweep::Dimension = dimension.parse()?;
            let result = sweep::run_sweep(&cfg, dim)?;
            for row in &result.rows {
                match &row.outcome {
                    Ok(map) => println!("{dim}={} MAP={map:.6}", row.setting),
                    Err(e) => println!("{dim}={} failed: {e}", row.setting),
                }
            }
            println!("wrote {}", result.path.display());
            if let Some((setting, _)) = result.first_failure() {
                let setting = setting.to_string();
                let source = result
                    .rows
                    .into_iter()
                    .find_map(|r| r.outcome.err())
                    .expect("a failure was found");
                return Err(CliError::Sweep {
                    setting,
                    source: Box::new(source),
                });
            }
        }
    }
    Ok(())
}
