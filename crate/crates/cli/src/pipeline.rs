//! Train, encode, search and evaluate, driven by an [`ExperimentConfig`].
//!
//! The `run_*` functions read and write files under the configured output
//! directory; the remaining functions are the in-memory steps they compose.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use tlh_core::eval::{mean_average_precision, MapReport};
use tlh_core::index::Neighbor;
use tlh_core::synthetic::Split;
use tlh_core::trainer::{self, EpochRecord};
use tlh_core::{
    BitCode, CodeDatabase, EncoderParams, FeatureMatrix, LabelMode, LabelStore, TrainConfig,
    TrainReport,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Context, Result};
use crate::files::{self, write_with};

/// Multi-label retrieval is scored on the top 5000 by default.
pub const MULTI_LABEL_EVAL_K: usize = 5000;

pub const ENCODER_FILE: &str = "encoder.enc";
pub const REPORT_FILE: &str = "train_report.csv";
pub const QUERY_CODES_FILE: &str = "query.bhc";
pub const DATABASE_CODES_FILE: &str = "database.bhc";
pub const SEARCH_FILE: &str = "search.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const CONFIG_FILE: &str = "experiment.conf";

pub fn load_split(features: &Path, labels: &Path, mode: Option<LabelMode>) -> Result<Split> {
    let features_m = files::read_features(features)?;
    let store = files::read_labels(labels, mode)?;
    if features_m.rows() != store.len() {
        return Err(CliError::Core {
            context: format!("{} vs {}", features.display(), labels.display()),
            source: tlh_core::Error::DimensionMismatch {
                expected: features_m.rows(),
                actual: store.len(),
            },
        });
    }
    Ok(Split {
        features: features_m,
        labels: store,
    })
}

pub fn load_train(cfg: &ExperimentConfig) -> Result<Split> {
    load_split(
        cfg.require(&cfg.train_features, "train_features")?,
        cfg.require(&cfg.train_labels, "train_labels")?,
        cfg.label_mode,
    )
}

pub fn load_query(cfg: &ExperimentConfig) -> Result<Split> {
    load_split(
        cfg.require(&cfg.query_features, "query_features")?,
        cfg.require(&cfg.query_labels, "query_labels")?,
        cfg.label_mode,
    )
}

pub fn load_database(cfg: &ExperimentConfig) -> Result<Split> {
    load_split(
        cfg.require(&cfg.database_features, "database_features")?,
        cfg.require(&cfg.database_labels, "database_labels")?,
        cfg.label_mode,
    )
}

/// The first `n` images of a split.
pub fn prefix(split: &Split, n: usize) -> Result<Split> {
    if n == 0 || n > split.features.rows() {
        return Err(CliError::usage(format!(
            "train size {n} must be in 1..={}",
            split.features.rows()
        )));
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(Split {
        features: split.features.select(&idx).context(|| "train subset".into())?,
        labels: split.labels.select(&idx).context(|| "train subset".into())?,
    })
}

pub fn init_params(cfg: &ExperimentConfig, input_dim: usize) -> Result<EncoderParams> {
    EncoderParams::init(
        cfg.architecture,
        input_dim,
        cfg.hidden_dim,
        cfg.code_length,
        cfg.seed,
    )
    .context(|| "encoder".into())
}

/// Trains from the seeded initialization, calling `on_epoch` after each epoch.
pub fn train_encoder<F>(
    cfg: &ExperimentConfig,
    train_cfg: &TrainConfig,
    train: &Split,
    on_epoch: F,
) -> Result<(EncoderParams, TrainReport)>
where
    F: FnMut(&EpochRecord, &EncoderParams) -> tlh_core::Result<()>,
{
    let init = init_params(cfg, train.features.cols())?;
    trainer::train_with(&train.features, &train.labels, train_cfg, &init, on_epoch)
        .context(|| "training".into())
}

pub fn encode_all(params: &EncoderParams, features: &FeatureMatrix) -> Result<Vec<BitCode>> {
    (0..features.rows())
        .into_par_iter()
        .map(|i| params.encode(features.row(i)))
        .collect::<tlh_core::Result<_>>()
        .context(|| "encoding".into())
}

pub fn default_eval_k(mode: LabelMode, database_len: usize) -> usize {
    match mode {
        LabelMode::Single => database_len,
        LabelMode::Multi => MULTI_LABEL_EVAL_K.min(database_len),
    }
}

/// MAP of `query` against `database` with codes from `params`.
pub fn evaluate(
    params: &EncoderParams,
    query: &Split,
    database: &Split,
    eval_k: Option<usize>,
) -> Result<MapReport> {
    let db_codes = encode_all(params, &database.features)?;
    let q_codes = encode_all(params, &query.features)?;
    evaluate_codes(
        &db_codes,
        database.labels.ids(),
        &q_codes,
        query.labels.ids(),
        &query.labels,
        &database.labels,
        eval_k,
    )
}

pub fn evaluate_codes(
    db_codes: &[BitCode],
    db_ids: &[u64],
    q_codes: &[BitCode],
    q_ids: &[u64],
    query_labels: &LabelStore,
    database_labels: &LabelStore,
    eval_k: Option<usize>,
) -> Result<MapReport> {
    let db = CodeDatabase::build(db_codes, db_ids.to_vec()).context(|| "database codes".into())?;
    let store = database_labels
        .merge(query_labels)
        .context(|| "merging query and database labels".into())?;
    let k = eval_k.unwrap_or_else(|| default_eval_k(store.mode(), db.len()));
    let queries: Vec<(u64, BitCode)> = q_ids.iter().copied().zip(q_codes.iter().cloned()).collect();
    mean_average_precision(&db, &queries, &store, k).context(|| "evaluation".into())
}

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

pub fn checkpoint_path(cfg: &ExperimentConfig, epoch: usize) -> PathBuf {
    cfg.output_dir.join("checkpoints").join(format!("epoch_{epoch:04}.enc"))
}

pub struct TrainOutcome {
    pub params: EncoderParams,
    pub report: TrainReport,
    pub encoder_path: PathBuf,
}

/// Trains and writes the encoder, the per-epoch report, periodic checkpoints
/// and the effective configuration.
pub fn run_train(cfg: &ExperimentConfig, verbose: bool) -> Result<TrainOutcome> {
    let train_cfg = cfg.train_config()?;
    let train = load_train(cfg)?;
    write_with(&out(cfg, CONFIG_FILE), |w| {
        w.write_all(cfg.to_text().as_bytes()).map_err(Into::into)
    })?;
    let mut checkpoint_err = None;
    let result = train_encoder(cfg, &train_cfg, &train, |rec, params| {
        if verbose {
            eprintln!(
                "epoch {:>4}  nll {:.5}  qerr {:.5}  lr {:.3e}  {:.2}s",
                rec.epoch, rec.nll_mean, rec.qerr_mean, rec.lr, rec.seconds
            );
        }
        if cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0 {
            if let Err(e) = files::write_encoder(&checkpoint_path(cfg, rec.epoch), params) {
                checkpoint_err = Some(e);
                return Err(tlh_core::Error::InvalidConfig("checkpoint write failed".into()));
            }
        }
        Ok(())
    });
    if let Some(e) = checkpoint_err {
        return Err(e);
    }
    let (params, report) = result?;
    let encoder_path = out(cfg, ENCODER_FILE);
    files::write_encoder(&encoder_path, &params)?;
    write_with(&out(cfg, REPORT_FILE), |w| report.write_csv(w))?;
    Ok(TrainOutcome {
        params,
        report,
        encoder_path,
    })
}

/// Encodes the query and database features with the configured encoder.
/// Ids come from the matching label files when set, else `0..N`.
pub fn run_encode(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let params = files::read_encoder(&cfg.encoder_path())?;
    let mut written = Vec::new();
    let sets = [
        (&cfg.query_features, &cfg.query_labels, "query_features", QUERY_CODES_FILE),
        (&cfg.database_features, &cfg.database_labels, "database_features", DATABASE_CODES_FILE),
    ];
    for (features, labels, key, name) in sets {
        let features = files::read_features(cfg.require(features, key)?)?;
        let ids = match labels {
            Some(p) => files::read_labels(p, cfg.label_mode)?.ids().to_vec(),
            None => (0..features.rows() as u64).collect(),
        };
        if ids.len() != features.rows() {
            return Err(CliError::usage(format!(
                "{key}: {} rows but {} labelled ids",
                features.rows(),
                ids.len()
            )));
        }
        let codes = encode_all(&params, &features)?;
        let path = out(cfg, name);
        files::write_codes(&path, params.code_length(), &codes, &ids)?;
        written.push(path);
    }
    Ok(written)
}

fn load_database_codes(path: &Path) -> Result<CodeDatabase> {
    let (codes, ids) = files::read_codes(path)?;
    CodeDatabase::build(&codes, ids).context(|| path.display().to_string())
}

pub fn search_results(
    db: &CodeDatabase,
    queries: &[BitCode],
    k: usize,
    parallel: bool,
) -> Result<Vec<Vec<Neighbor>>> {
    db.batch_search(queries, k, parallel).context(|| "search".into())
}

/// Writes the top `search_k` neighbours of every query as
/// `query_id,rank,id,distance` (rank is 1-based).
pub fn run_search(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let db = load_database_codes(&out(cfg, DATABASE_CODES_FILE))?;
    let (queries, qids) = files::read_codes(&out(cfg, QUERY_CODES_FILE))?;
    let results = search_results(&db, &queries, cfg.search_k, cfg.parallel)?;
    let path = out(cfg, SEARCH_FILE);
    write_with(&path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["query_id", "rank", "id", "distance"])?;
        for (qid, hits) in qids.iter().zip(&results) {
            for (rank, h) in hits.iter().enumerate() {
                csv.serialize((qid, rank + 1, h.id, h.distance))?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(path)
}

/// Scores the encoded query set against the encoded database and writes the
/// per-query report.
pub fn run_eval(cfg: &ExperimentConfig) -> Result<MapReport> {
    let (db_codes, db_ids) = files::read_codes(&out(cfg, DATABASE_CODES_FILE))?;
    let (q_codes, q_ids) = files::read_codes(&out(cfg, QUERY_CODES_FILE))?;
    let qlabels = files::read_labels(cfg.require(&cfg.query_labels, "query_labels")?, cfg.label_mode)?;
    let dlabels = files::read_labels(
        cfg.require(&cfg.database_labels, "database_labels")?,
        cfg.label_mode,
    )?;
    let report = evaluate_codes(&db_codes, &db_ids, &q_codes, &q_ids, &qlabels, &dlabels, cfg.eval_k)?;
    write_with(&out(cfg, EVAL_FILE), |w| report.write_csv(w))?;
    Ok(report)
}
