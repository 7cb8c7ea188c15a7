//! Gaussian-cluster benchmark data.
//!
//! `C` cluster centres lie on orthonormal directions at distance
//! `separation · σ` from the origin (so distinct centres are
//! `√2 · separation · σ` apart); points are `centre + σ · N(0, I)`. Class of
//! point `i` is `i mod C`, so every prefix of a split is class-balanced.
//!
//! The database holds ids `0..database`; the training set is the first
//! `train` database points (same ids); queries get ids
//! `database..database + query`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::features::FeatureMatrix;
use crate::sampler::{LabelMode, LabelStore};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub dim: usize,
    /// Distance of each centre from the origin, in units of `sigma`.
    pub separation: f64,
    pub sigma: f64,
    pub train: usize,
    pub query: usize,
    pub database: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 64,
            separation: 4.0,
            sigma: 1.0,
            train: 5000,
            query: 1000,
            database: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub features: FeatureMatrix,
    pub labels: LabelStore,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub train: Split,
    pub query: Split,
    pub database: Split,
}

fn centres(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.classes);
    for _ in 0..cfg.classes {
        let mut v: Vec<f64> = (0..cfg.dim).map(|_| StandardNormal.sample(rng)).collect();
        if basis.len() < cfg.dim {
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    let radius = cfg.separation * cfg.sigma;
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x * radius).collect())
        .collect()
}

fn draw_points(
    centres: &[Vec<f64>],
    sigma: f64,
    n: usize,
    first_id: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Split> {
    let dim = centres[0].len();
    let c = centres.len();
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % c;
        for &m in &centres[class] {
            let z: f64 = StandardNormal.sample(rng);
            data.push(m + sigma * z);
        }
        labels.push(vec![class as u32]);
    }
    let ids = (first_id..first_id + n as u64).collect();
    Ok(Split {
        features: FeatureMatrix::new(n, dim, data)?,
        labels: LabelStore::with_ids(LabelMode::Single, labels, ids)?,
    })
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if cfg.classes < 2 || cfg.dim == 0 {
        return Err(Error::InvalidConfig("need >= 2 classes and dim >= 1".into()));
    }
    if !(cfg.separation.is_finite() && cfg.separation >= 0.0 && cfg.sigma.is_finite() && cfg.sigma > 0.0) {
        return Err(Error::InvalidConfig("separation must be >= 0 and sigma > 0".into()));
    }
    if cfg.database == 0 || cfg.query == 0 || cfg.train == 0 {
        return Err(Error::InvalidConfig("split sizes must be >= 1".into()));
    }
    if cfg.train > cfg.database {
        return Err(Error::InvalidConfig(format!(
            "training set ({}) is drawn from the database ({}) and cannot exceed it",
            cfg.train, cfg.database
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centres = centres(cfg, &mut rng);
    let database = draw_points(&centres, cfg.sigma, cfg.database, 0, &mut rng)?;
    let query = draw_points(&centres, cfg.sigma, cfg.query, cfg.database as u64, &mut rng)?;
    let prefix: Vec<usize> = (0..cfg.train).collect();
    let train = Split {
        features: database.features.select(&prefix)?,
        labels: database.labels.select(&prefix)?,
    };
    Ok(SyntheticDataset {
        train,
        query,
        database,
    })
}
