//! Retrieval metrics.
//!
//! Average precision at depth `k` divides by the number of relevant items
//! retrieved within the top `k` (not by all relevant items in the database),
//! and a query with nothing relevant in its top `k` scores 0. When a query id
//! is also in the database its own entry is removed before truncation.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::codes::BitCode;
use crate::index::CodeDatabase;
use crate::sampler::LabelStore;
use crate::{Error, Result};

/// AP over the top `min(k, flags.len())` positions.
pub fn average_precision(flags: &[bool], k: usize) -> f64 {
    let depth = k.min(flags.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in flags[..depth].iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Fraction of relevant items in the top `min(k, flags.len())` positions.
pub fn precision_at_k(flags: &[bool], k: usize) -> f64 {
    let depth = k.min(flags.len());
    if depth == 0 {
        return 0.0;
    }
    flags[..depth].iter().filter(|&&r| r).count() as f64 / depth as f64
}

/// Neumaier-compensated sum of the values taken in ascending order, so the
/// result does not depend on the input order.
pub fn stable_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// `(query id, AP)` in query order.
    pub per_query: Vec<(u64, f64)>,
    pub k: usize,
    /// Database size.
    pub n: usize,
    /// Code length.
    pub bits: usize,
}

/// Relevance flags of the top-`k` Hamming ranking for one query.
pub fn relevance_flags(
    db: &CodeDatabase,
    db_positions: &[usize],
    store: &LabelStore,
    query_id: u64,
    query: &BitCode,
    k: usize,
) -> Result<Vec<bool>> {
    let qpos = store.position(query_id).ok_or(Error::MissingLabels(query_id))?;
    let hits = db.search(query, k.saturating_add(1))?;
    Ok(hits
        .iter()
        .filter(|h| h.id != query_id)
        .take(k)
        .map(|h| store.similar_unchecked(qpos, db_positions[h.position]))
        .collect())
}

/// Store positions of every database id.
pub fn database_positions(db: &CodeDatabase, store: &LabelStore) -> Result<Vec<usize>> {
    db.ids()
        .iter()
        .map(|&id| store.position(id).ok_or(Error::MissingLabels(id)))
        .collect()
}

/// MAP@k of Hamming ranking, with relevance from `store`.
pub fn mean_average_precision(
    db: &CodeDatabase,
    queries: &[(u64, BitCode)],
    store: &LabelStore,
    k: usize,
) -> Result<MapReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let positions = database_positions(db, store)?;
    let per_query: Vec<(u64, f64)> = queries
        .par_iter()
        .map(|(id, code)| {
            let flags = relevance_flags(db, &positions, store, *id, code, k)?;
            Ok((*id, average_precision(&flags, k)))
        })
        .collect::<Result<_>>()?;
    let aps: Vec<f64> = per_query.iter().map(|&(_, ap)| ap).collect();
    Ok(MapReport {
        map: stable_mean(&aps),
        per_query,
        k,
        n: db.len(),
        bits: db.bits(),
    })
}

impl MapReport {
    /// CSV `query_id,ap` followed by a `# MAP=...,k=...,N=...,L=...` summary line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "query_id,ap")?;
        for (id, ap) in &self.per_query {
            writeln!(w, "{id},{ap}")?;
        }
        writeln!(w, "# MAP={},k={},N={},L={}", self.map, self.k, self.n, self.bits)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut summary = None;
        let mut per_query = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let bad = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            if lineno == 0 {
                if line != "query_id,ap" {
                    return Err(bad("expected header `query_id,ap`"));
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                summary = Some(parse_summary(rest).ok_or_else(|| bad("malformed summary line"))?);
                continue;
            }
            let (id, ap) = line.split_once(',').ok_or_else(|| bad("expected two fields"))?;
            let id = id.parse().map_err(|_| bad("bad query id"))?;
            let ap = ap.parse().map_err(|_| bad("bad AP value"))?;
            per_query.push((id, ap));
        }
        let (map, k, n, bits) = summary.ok_or_else(|| Error::format("evaluation report", "missing summary line"))?;
        Ok(Self {
            map,
            per_query,
            k,
            n,
            bits,
        })
    }
}

fn parse_summary(s: &str) -> Option<(f64, usize, usize, usize)> {
    let mut map = None;
    let (mut k, mut n, mut l) = (None, None, None);
    for field in s.split(',') {
        let (key, value) = field.split_once('=')?;
        match key {
            "MAP" => map = value.parse().ok(),
            "k" => k = value.parse().ok(),
            "N" => n = value.parse().ok(),
            "L" => l = value.parse().ok(),
            _ => return None,
        }
    }
    Some((map?, k?, n?, l?))
}
