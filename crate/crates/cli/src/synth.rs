//! `make-synthetic`: writes the Gaussian-cluster benchmark to disk together
//! with a starter experiment configuration.

use std::io::Write;
use std::path::{Path, PathBuf};

use tlh_core::synthetic::{generate, Split, SyntheticConfig};

use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::files::write_with;
use crate::pipeline::CONFIG_FILE;

fn write_split(dir: &Path, name: &str, split: &Split) -> Result<(PathBuf, PathBuf)> {
    let features = dir.join(format!("{name}.fvec"));
    let labels = dir.join(format!("{name}.labels"));
    write_with(&features, |w| split.features.write_fvc(w))?;
    write_with(&labels, |w| split.labels.write(w))?;
    Ok((features, labels))
}

/// Writes `{train,query,database}.{fvec,labels}` and `experiment.conf` into
/// `dir`. The configuration refers to the data by relative path and sends
/// outputs to `dir/run`.
pub fn run_make_synthetic(cfg: &SyntheticConfig, dir: &Path) -> Result<ExperimentConfig> {
    let data = generate(cfg).context(|| "synthetic benchmark".into())?;
    write_split(dir, "train", &data.train)?;
    write_split(dir, "query", &data.query)?;
    write_split(dir, "database", &data.database)?;

    let mut exp = ExperimentConfig::default();
    for (k, v) in [
        ("train_features", "train.fvec"),
        ("train_labels", "train.labels"),
        ("query_features", "query.fvec"),
        ("query_labels", "query.labels"),
        ("database_features", "database.fvec"),
        ("database_labels", "database.labels"),
        ("output_dir", "run"),
    ] {
        exp.set(k, v)?;
    }
    let header = format!(
        "# synthetic benchmark: {} classes, dim {}, separation {}, sigma {}, seed {}\n\
         # triplets_per_epoch and batch_size have no default and must be set\n",
        cfg.classes, cfg.dim, cfg.separation, cfg.sigma, cfg.seed
    );
    let text = exp.to_text();
    write_with(&dir.join(CONFIG_FILE), |w| {
        w.write_all(header.as_bytes())?;
        w.write_all(text.as_bytes())?;
        Ok(())
    })?;
    ExperimentConfig::load(&dir.join(CONFIG_FILE))
}
