//! One-dimensional hyper-parameter sweeps.
//!
//! Every grid point is a full train/encode/evaluate cycle with the base
//! configuration's seeds. Points run in ascending order of their setting and
//! the sweep stops at the first failure; the rows produced so far, plus a
//! row flagging the failure, are still written. Parallel mode runs every
//! point concurrently and then keeps exactly the rows a sequential run would.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use tlh_core::synthetic::Split;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::files::write_with;
use crate::pipeline::{evaluate, load_database, load_query, load_train, prefix, train_encoder};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Alpha,
    Lambda,
    TrainSize,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Alpha => "alpha",
            Dimension::Lambda => "lambda",
            Dimension::TrainSize => "train_size",
        })
    }
}

impl FromStr for Dimension {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Dimension::Alpha),
            "lambda" => Ok(Dimension::Lambda),
            "train_size" | "train-size" => Ok(Dimension::TrainSize),
            other => Err(CliError::usage(format!(
                "unknown sweep dimension {other:?} (expected alpha, lambda or train_size)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Setting {
    Real(f64),
    Count(usize),
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Real(v) => write!(f, "{v}"),
            Setting::Count(n) => write!(f, "{n}"),
        }
    }
}

impl Setting {
    fn key(&self) -> f64 {
        match *self {
            Setting::Real(v) => v,
            Setting::Count(n) => n as f64,
        }
    }
}

#[derive(Debug)]
pub struct SweepRow {
    pub setting: Setting,
    pub outcome: Result<f64>,
}

pub struct Sweep {
    pub dimension: Dimension,
    pub rows: Vec<SweepRow>,
    pub path: PathBuf,
}

impl Sweep {
    pub fn first_failure(&self) -> Option<(&Setting, &CliError)> {
        self.rows
            .iter()
            .find_map(|r| r.outcome.as_ref().err().map(|e| (&r.setting, e)))
    }
}

/// Grid points in ascending order, duplicates removed.
pub fn grid(cfg: &ExperimentConfig, dim: Dimension) -> Result<Vec<Setting>> {
    let mut settings: Vec<Setting> = match dim {
        Dimension::Alpha => cfg.alpha_grid.iter().map(|&v| Setting::Real(v)).collect(),
        Dimension::Lambda => cfg.lambda_grid.iter().map(|&v| Setting::Real(v)).collect(),
        Dimension::TrainSize => cfg.train_size_grid.iter().map(|&n| Setting::Count(n)).collect(),
    };
    if settings.is_empty() {
        return Err(CliError::usage(format!("{dim}_grid is empty")));
    }
    if let Some(bad) = settings.iter().find(|s| !s.key().is_finite()) {
        return Err(CliError::usage(format!("{dim}_grid contains {bad}")));
    }
    settings.sort_by(|a, b| a.key().total_cmp(&b.key()));
    settings.dedup();
    Ok(settings)
}

fn run_point(
    base: &ExperimentConfig,
    dim: Dimension,
    setting: Setting,
    train: &Split,
    query: &Split,
    database: &Split,
) -> Result<f64> {
    let mut cfg = base.clone();
    let subset;
    let train = match (dim, setting) {
        (Dimension::Alpha, Setting::Real(v)) => {
            cfg.alpha = Some(v);
            train
        }
        (Dimension::Lambda, Setting::Real(v)) => {
            cfg.lambda = v;
            train
        }
        (Dimension::TrainSize, Setting::Count(n)) => {
            subset = prefix(train, n)?;
            &subset
        }
        _ => unreachable!("grid settings match their dimension"),
    };
    let train_cfg = cfg.train_config()?;
    let (params, _) = train_encoder(&cfg, &train_cfg, train, |_, _| Ok(()))?;
    Ok(evaluate(&params, query, database, cfg.eval_k)?.map)
}

/// Rows a sequential sweep would produce: everything up to and including
/// the first failure.
fn truncate_after_failure(rows: &mut Vec<SweepRow>) {
    if let Some(i) = rows.iter().position(|r| r.outcome.is_err()) {
        rows.truncate(i + 1);
    }
}

pub fn sweep_splits(
    cfg: &ExperimentConfig,
    dim: Dimension,
    train: &Split,
    query: &Split,
    database: &Split,
) -> Result<Vec<SweepRow>> {
    let settings = grid(cfg, dim)?;
    let point = |&setting: &Setting| SweepRow {
        setting,
        outcome: run_point(cfg, dim, setting, train, query, database),
    };
    let mut rows: Vec<SweepRow> = if cfg.parallel {
        settings.par_iter().map(point).collect()
    } else {
        let mut rows = Vec::with_capacity(settings.len());
        for s in &settings {
            let row = point(s);
            let failed = row.outcome.is_err();
            rows.push(row);
            if failed {
                break;
            }
        }
        rows
    };
    truncate_after_failure(&mut rows);
    Ok(rows)
}

pub fn write_rows<W: std::io::Write>(w: &mut W, rows: &[SweepRow]) -> tlh_core::Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["setting", "map", "status"])?;
    for r in rows {
        let setting = r.setting.to_string();
        match &r.outcome {
            Ok(map) => csv.write_record([setting, map.to_string(), "ok".into()])?,
            Err(e) => csv.write_record([setting, String::new(), format!("failed: {e}")])?,
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn sweep_path(cfg: &ExperimentConfig, dim: Dimension) -> PathBuf {
    cfg.output_dir.join(format!("sweep_{dim}.csv"))
}

/// Runs the sweep and writes `sweep_<dimension>.csv` as
/// `setting,map,status`, even when a grid point fails.
pub fn run_sweep(cfg: &ExperimentConfig, dim: Dimension) -> Result<Sweep> {
    grid(cfg, dim)?;
    cfg.train_config()?;
    let train = load_train(cfg)?;
    let query = load_query(cfg)?;
    let database = load_database(cfg)?;
    let rows = sweep_splits(cfg, dim, &train, &query, &database)?;
    let path = sweep_path(cfg, dim);
    write_with(&path, |w| write_rows(w, &rows))?;
    Ok(Sweep {
        dimension: dim,
        rows,
        path,
    })
}
