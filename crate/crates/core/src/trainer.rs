//! Minibatch SGD on the triplet loss.
//!
//! Each epoch draws a fresh set of triplets (seed `seed + epoch`), splits it
//! into batches in draw order, and for every batch:
//!
//! 1. encodes the distinct images the batch references,
//! 2. computes `∂L/∂u` for those codes (quantization term once per image),
//! 3. backpropagates through the encoder and averages over the batch's
//!    triplet count,
//! 4. takes a plain SGD step.
//!
//! Everything runs on one thread in a fixed order, so a given seed always
//! produces bit-identical parameters.

use std::io::{BufRead, Write};
use std::time::Instant;

use crate::codes::RealCode;
use crate::encoder::EncoderParams;
use crate::error::check_dims;
use crate::features::FeatureMatrix;
use crate::loss::{self, LossConfig, LossTerms, QuantizationSum, Triplet};
use crate::sampler::{LabelStore, TripletSampler};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Triplets drawn per epoch (`M`).
    pub triplets_per_epoch: usize,
    /// Triplets per SGD step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    pub quantization: QuantizationSum,
}

impl TrainConfig {
    /// Defaults: 100 epochs, lr 0.01 decayed by 0.1 every 40 epochs,
    /// `α = L/2`, `λ = 100`, seed 0.
    pub fn new(code_length: usize, triplets_per_epoch: usize, batch_size: usize) -> Self {
        Self {
            epochs: 100,
            triplets_per_epoch,
            batch_size,
            learning_rate: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_every: 40,
            alpha: code_length as f64 / 2.0,
            lambda: 100.0,
            seed: 0,
            quantization: QuantizationSum::Referenced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.triplets_per_epoch == 0 {
            return bad("triplets_per_epoch must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!("lr_decay_factor must be in (0, 1], got {}", self.lr_decay_factor));
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be >= 1".into());
        }
        self.loss_config().validate()
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha: self.alpha,
            lambda: self.lambda,
            quantization: self.quantization,
        }
    }

    /// Learning rate in effect during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.lr_decay_every) as i32;
        self.learning_rate * self.lr_decay_factor.powi(decays)
    }

    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed.wrapping_add(epoch as u64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean `−log σ(x)` over the epoch's triplets, measured before each step.
    pub nll_mean: f64,
    /// Mean `||b − u||²` per penalized image.
    pub qerr_mean: f64,
    pub lr: f64,
    pub seconds: f64,
    /// Mean gradient scale `1 − σ(x)` over the epoch's triplets.
    pub grad_scale_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    /// CSV `epoch,nll_mean,qerr_mean,lr,seconds`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "nll_mean", "qerr_mean", "lr", "seconds"])?;
        for r in &self.epochs {
            out.write_record([
                r.epoch.to_string(),
                r.nll_mean.to_string(),
                r.qerr_mean.to_string(),
                r.lr.to_string(),
                r.seconds.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`TrainReport::write_csv`]. The gradient
    /// scale is not persisted and reads back as NaN.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["epoch", "nll_mean", "qerr_mean", "lr", "seconds"] {
            return Err(Error::format("training report", "unexpected header"));
        }
        let mut epochs = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let field = |k: usize| -> Result<f64> {
                row[k].parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    msg: format!("bad number {:?}", &row[k]),
                })
            };
            epochs.push(EpochRecord {
                epoch: field(0)? as usize,
                nll_mean: field(1)?,
                qerr_mean: field(2)?,
                lr: field(3)?,
                seconds: field(4)?,
                grad_scale_mean: f64::NAN,
            });
        }
        Ok(Self { epochs })
    }
}

/// Codes for the images a triplet set touches, with triplets re-indexed
/// into that local set.
struct LocalProblem {
    images: Vec<usize>,
    triplets: Vec<Triplet>,
}

impl LocalProblem {
    fn new(triplets: &[Triplet], n_images: usize, mode: QuantizationSum) -> Self {
        let images: Vec<usize> = match mode {
            QuantizationSum::Full => (0..n_images).collect(),
            QuantizationSum::Referenced => {
                let mut v: Vec<usize> = triplets.iter().flat_map(|t| [t.q, t.p, t.n]).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        };
        let local = |i: usize| images.binary_search(&i).expect("image is in local set");
        let triplets = triplets
            .iter()
            .map(|t| Triplet {
                q: local(t.q),
                p: local(t.p),
                n: local(t.n),
            })
            .collect();
        Self { images, triplets }
    }

    fn encode(&self, features: &FeatureMatrix, params: &EncoderParams) -> Result<Vec<RealCode>> {
        self.images
            .iter()
            .map(|&i| params.forward(features.row(i)))
            .collect()
    }
}

fn check_inputs(features: &FeatureMatrix, params: &EncoderParams, triplets: &[Triplet]) -> Result<()> {
    check_dims(params.input_dim(), features.cols())?;
    for t in triplets {
        t.validate(features.rows())?;
    }
    Ok(())
}

/// Both loss components at `params` without updating anything.
pub fn loss_probe(
    features: &FeatureMatrix,
    triplets: &[Triplet],
    params: &EncoderParams,
    cfg: &LossConfig,
) -> Result<LossTerms> {
    check_inputs(features, params, triplets)?;
    let problem = LocalProblem::new(triplets, features.rows(), cfg.quantization);
    let codes = problem.encode(features, params)?;
    loss::loss_terms(&problem.triplets, &codes, cfg)
}

/// Gradient of the batch loss with respect to the encoder parameters,
/// averaged over the batch's triplet count.
pub fn batch_gradient(
    features: &FeatureMatrix,
    triplets: &[Triplet],
    params: &EncoderParams,
    cfg: &LossConfig,
) -> Result<(LossTerms, crate::EncoderGrads)> {
    check_inputs(features, params, triplets)?;
    if triplets.is_empty() {
        return Err(Error::Empty("triplet batch"));
    }
    let problem = LocalProblem::new(triplets, features.rows(), cfg.quantization);
    let codes = problem.encode(features, params)?;
    let (terms, grad_u) = loss::loss_and_grad(&problem.triplets, &codes, cfg)?;
    let mut grads = params.zero_grads();
    let scale = 1.0 / triplets.len() as f64;
    for (&img, g) in problem.images.iter().zip(&grad_u) {
        params.accumulate_backward(features.row(img), g, scale, &mut grads)?;
    }
    Ok((terms, grads))
}

pub fn train(
    features: &FeatureMatrix,
    store: &LabelStore,
    cfg: &TrainConfig,
    init: &EncoderParams,
) -> Result<(EncoderParams, TrainReport)> {
    train_with(features, store, cfg, init, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every completed epoch.
pub fn train_with<F>(
    features: &FeatureMatrix,
    store: &LabelStore,
    cfg: &TrainConfig,
    init: &EncoderParams,
    mut on_epoch: F,
) -> Result<(EncoderParams, TrainReport)>
where
    F: FnMut(&EpochRecord, &EncoderParams) -> Result<()>,
{
    cfg.validate()?;
    check_dims(init.input_dim(), features.cols())?;
    check_dims(features.rows(), store.len())?;
    let sampler = TripletSampler::new(store)?;
    let loss_cfg = cfg.loss_config();
    let mut params = init.clone();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = cfg.lr_at(epoch);
        let triplets = sampler.sample(cfg.triplets_per_epoch, cfg.epoch_seed(epoch))?;
        let (mut nll, mut qerr, mut factor, mut images) = (0.0, 0.0, 0.0, 0usize);

        for (step, batch) in triplets.chunks(cfg.batch_size).enumerate() {
            let diverged = Error::Diverged {
                epoch: epoch + 1,
                step: step + 1,
            };
            let (terms, grads) = match batch_gradient(features, batch, &params, &loss_cfg) {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => return Err(diverged),
                Err(e) => return Err(e),
            };
            if !(terms.nll.is_finite() && terms.qerr.is_finite()) {
                return Err(diverged);
            }
            nll += terms.nll;
            qerr += terms.qerr;
            factor += terms.factor_sum;
            images += terms.images;
            if lr != 0.0 && params.apply_gradient(&grads, lr).is_err() {
                return Err(diverged);
            }
        }

        let record = EpochRecord {
            epoch: epoch + 1,
            nll_mean: nll / triplets.len() as f64,
            qerr_mean: qerr / images.max(1) as f64,
            lr,
            seconds: started.elapsed().as_secs_f64(),
            grad_scale_mean: factor / triplets.len() as f64,
        };
        on_epoch(&record, &params)?;
        report.epochs.push(record);
    }
    Ok((params, report))
}
