//! Label stores, similarity ground truth and triplet sampling.
//!
//! Two images are similar when they share a class (single-label data) or at
//! least one label (multi-label data). A triplet `(q, p, n)` is drawn with `q`
//! uniform over images that have both a similar and a dissimilar partner, then
//! `p` uniform over the similar partners and `n` uniform over the dissimilar
//! ones.
//!
//! Label files are text, one line per image: `id,label;label;...`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::loss::Triplet;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelMode {
    Single,
    Multi,
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Single => "single",
            LabelMode::Multi => "multi",
        })
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(LabelMode::Single),
            "multi" => Ok(LabelMode::Multi),
            other => Err(Error::InvalidConfig(format!(
                "unknown label mode {other:?} (expected single or multi)"
            ))),
        }
    }
}

/// Per-image label sets plus the external id of every image.
#[derive(Clone, Debug)]
pub struct LabelStore {
    mode: LabelMode,
    labels: Vec<Vec<u32>>,
    ids: Vec<u64>,
    positions: HashMap<u64, usize>,
}

impl PartialEq for LabelStore {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode && self.labels == other.labels && self.ids == other.ids
    }
}

impl LabelStore {
    /// Ids default to `0..N`.
    pub fn new(mode: LabelMode, labels: Vec<Vec<u32>>) -> Result<Self> {
        let ids = (0..labels.len() as u64).collect();
        Self::with_ids(mode, labels, ids)
    }

    pub fn single(classes: &[u32]) -> Result<Self> {
        Self::new(LabelMode::Single, classes.iter().map(|&c| vec![c]).collect())
    }

    pub fn with_ids(mode: LabelMode, mut labels: Vec<Vec<u32>>, ids: Vec<u64>) -> Result<Self> {
        if labels.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: ids.len(),
            });
        }
        for (i, set) in labels.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(Error::InvalidConfig(format!("image {} has no labels", ids[i])));
            }
            if mode == LabelMode::Single && set.len() != 1 {
                return Err(Error::InvalidConfig(format!(
                    "image {} has {} labels in single-label mode",
                    ids[i],
                    set.len()
                )));
            }
        }
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if positions.insert(id, i).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self {
            mode,
            labels,
            ids,
            positions,
        })
    }

    pub fn mode(&self) -> LabelMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self, i: usize) -> &[u32] {
        &self.labels[i]
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.len() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            })
        }
    }

    /// Ground-truth similarity of images at positions `i` and `j`.
    pub fn similar(&self, i: usize, j: usize) -> Result<bool> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.similar_unchecked(i, j))
    }

    pub(crate) fn similar_unchecked(&self, i: usize, j: usize) -> bool {
        intersects(&self.labels[i], &self.labels[j])
    }

    /// Similarity looked up by external id.
    pub fn similar_ids(&self, a: u64, b: u64) -> Result<bool> {
        let i = self.position(a).ok_or(Error::MissingLabels(a))?;
        let j = self.position(b).ok_or(Error::MissingLabels(b))?;
        Ok(self.similar_unchecked(i, j))
    }

    /// Rows at the given positions, keeping their ids.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut labels = Vec::with_capacity(indices.len());
        let mut ids = Vec::with_capacity(indices.len());
        for &i in indices {
            self.check_index(i)?;
            labels.push(self.labels[i].clone());
            ids.push(self.ids[i]);
        }
        Self::with_ids(self.mode, labels, ids)
    }

    /// Union of two stores. Ids present in both must carry the same labels.
    pub fn merge(&self, other: &LabelStore) -> Result<Self> {
        let mode = if self.mode == LabelMode::Multi || other.mode == LabelMode::Multi {
            LabelMode::Multi
        } else {
            LabelMode::Single
        };
        let mut labels = self.labels.clone();
        let mut ids = self.ids.clone();
        for (i, &id) in other.ids.iter().enumerate() {
            match self.position(id) {
                Some(j) if self.labels[j] == other.labels[i] => {}
                Some(_) => {
                    return Err(Error::InvalidConfig(format!(
                        "id {id} has conflicting labels in merged stores"
                    )))
                }
                None => {
                    labels.push(other.labels[i].clone());
                    ids.push(id);
                }
            }
        }
        Self::with_ids(mode, labels, ids)
    }

    /// Parses a label file. The mode is inferred (single iff every line has
    /// exactly one label) unless `mode` is given.
    pub fn read<R: BufRead>(r: R, mode: Option<LabelMode>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                line: lineno + 1,
                msg,
            };
            let (id, rest) = line
                .split_once(',')
                .ok_or_else(|| parse_err("expected `id,label;label;...`".into()))?;
            let id: u64 = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad image id {id:?}")))?;
            let set = rest
                .split(';')
                .map(|l| {
                    l.trim()
                        .parse::<u32>()
                        .map_err(|_| parse_err(format!("bad label {l:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(LabelMode::Single) = mode {
                if set.len() != 1 {
                    return Err(parse_err(format!(
                        "{} labels on a line in single-label mode",
                        set.len()
                    )));
                }
            }
            ids.push(id);
            labels.push(set);
        }
        if labels.is_empty() {
            return Err(Error::Empty("label file"));
        }
        let mode = mode.unwrap_or(if labels.iter().all(|s| s.len() == 1) {
            LabelMode::Single
        } else {
            LabelMode::Multi
        });
        Self::with_ids(mode, labels, ids)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        for (id, set) in self.ids.iter().zip(&self.labels) {
            write!(w, "{id},")?;
            for (k, l) in set.iter().enumerate() {
                if k > 0 {
                    w.write_all(b";")?;
                }
                write!(w, "{l}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Precomputed eligibility tables for drawing triplets from one store.
#[derive(Clone, Debug)]
pub struct TripletSampler {
    n: usize,
    /// Images admitting both a positive and a negative.
    eligible: Vec<usize>,
    /// For each image, which pool holds its similar images (itself included).
    pool_of: Vec<usize>,
    /// Sorted positions of all images similar to the pool's label set.
    pools: Vec<Vec<usize>>,
}

impl TripletSampler {
    pub fn new(store: &LabelStore) -> Result<Self> {
        let n = store.len();
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            for &l in store.labels(i) {
                members.entry(l).or_default().push(i);
            }
        }
        let mut pool_ids: HashMap<&[u32], usize> = HashMap::new();
        let mut pools: Vec<Vec<usize>> = Vec::new();
        let mut pool_of = Vec::with_capacity(n);
        for i in 0..n {
            let key = store.labels(i);
            let id = *pool_ids.entry(key).or_insert_with(|| {
                let mut pool: Vec<usize> = key.iter().flat_map(|l| members[l].iter().copied()).collect();
                pool.sort_unstable();
                pool.dedup();
                pools.push(pool);
                pools.len() - 1
            });
            pool_of.push(id);
        }
        let eligible: Vec<usize> = (0..n)
            .filter(|&i| {
                let size = pools[pool_of[i]].len();
                size >= 2 && size < n
            })
            .collect();
        if eligible.is_empty() {
            return Err(Error::InfeasibleSampling(
                "no image has both a similar and a dissimilar partner".into(),
            ));
        }
        Ok(Self {
            n,
            eligible,
            pool_of,
            pools,
        })
    }

    /// Number of images that can serve as a query.
    pub fn eligible_queries(&self) -> &[usize] {
        &self.eligible
    }

    /// Draws `m` triplets with replacement, deterministically in `seed`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Vec<Triplet>> {
        if m == 0 {
            return Err(Error::InvalidConfig("triplet count must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..m).map(|_| self.draw(&mut rng)).collect())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Triplet {
        let q = self.eligible[rng.random_range(0..self.eligible.len())];
        let pool = &self.pools[self.pool_of[q]];
        let own = pool.binary_search(&q).expect("image is in its own pool");
        let r = rng.random_range(0..pool.len() - 1);
        let p = pool[if r >= own { r + 1 } else { r }];
        let r = rng.random_range(0..self.n - pool.len());
        let n = nth_outside(pool, r);
        Triplet { q, p, n }
    }
}

/// The `r`-th (0-based) integer not present in the sorted set `taken`.
fn nth_outside(taken: &[usize], r: usize) -> usize {
    // taken[j] - j counts the gaps below taken[j]; find how many taken
    // elements precede the answer.
    let (mut lo, mut hi) = (0, taken.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if taken[mid] - mid <= r {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    r + lo
}

/// Convenience wrapper building a [`TripletSampler`] and drawing once.
pub fn sample_triplets(store: &LabelStore, m: usize, seed: u64) -> Result<Vec<Triplet>> {
    TripletSampler::new(store)?.sample(m, seed)
}
