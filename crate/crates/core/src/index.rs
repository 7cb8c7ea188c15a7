//! Exhaustive Hamming-distance search over packed codes.
//!
//! Results are ordered by ascending distance, ties by ascending insertion
//! position, so rankings (and anything computed from them) are reproducible.

use std::collections::BinaryHeap;
use std::io::{BufRead, Read, Write};

use rayon::prelude::*;

use crate::codes::{self, hamming_words, words_for, BitCode};
use crate::error::check_dims;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Neighbor {
    pub id: u64,
    /// Insertion position in the database.
    pub position: usize,
    pub distance: u32,
}

/// Immutable database of equal-length codes stored contiguously.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeDatabase {
    bits: usize,
    stride: usize,
    words: Vec<u64>,
    ids: Vec<u64>,
}

impl CodeDatabase {
    pub fn build(codes: &[BitCode], ids: Vec<u64>) -> Result<Self> {
        let first = codes.first().ok_or(Error::Empty("code database"))?;
        check_dims(codes.len(), ids.len())?;
        let bits = first.len();
        let stride = words_for(bits);
        let mut words = Vec::with_capacity(codes.len() * stride);
        for c in codes {
            check_dims(bits, c.len())?;
            words.extend_from_slice(c.words());
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self {
            bits,
            stride,
            words,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Code length in bits.
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    #[inline]
    fn words_at(&self, i: usize) -> &[u64] {
        &self.words[i * self.stride..(i + 1) * self.stride]
    }

    pub fn code(&self, i: usize) -> BitCode {
        BitCode::from_words(self.bits, self.words_at(i).to_vec()).expect("stored code is valid")
    }

    pub fn codes(&self) -> Vec<BitCode> {
        (0..self.len()).map(|i| self.code(i)).collect()
    }

    /// Distances from `query` to every entry, in insertion order.
    pub fn distances(&self, query: &BitCode) -> Result<Vec<u32>> {
        check_dims(self.bits, query.len())?;
        let q = query.words();
        Ok(self
            .words
            .chunks_exact(self.stride)
            .map(|w| hamming_words(w, q))
            .collect())
    }

    /// The `min(k, N)` nearest entries.
    pub fn search(&self, query: &BitCode, k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        let dist = self.distances(query)?;
        let n = self.len();
        let k = k.min(n);
        let ranked: Vec<(u32, usize)> = if k.saturating_mul(4) >= n {
            let mut all: Vec<(u32, usize)> = dist.into_iter().zip(0..).collect();
            all.sort_unstable();
            all.truncate(k);
            all
        } else {
            let mut heap: BinaryHeap<(u32, usize)> = BinaryHeap::with_capacity(k + 1);
            for (pos, d) in dist.into_iter().enumerate() {
                if heap.len() < k {
                    heap.push((d, pos));
                } else if d < heap.peek().expect("heap is full").0 {
                    // Later positions never win ties, so strict < suffices.
                    heap.pop();
                    heap.push((d, pos));
                }
            }
            heap.into_sorted_vec()
        };
        Ok(ranked
            .into_iter()
            .map(|(distance, position)| Neighbor {
                id: self.ids[position],
                position,
                distance,
            })
            .collect())
    }

    /// Independent searches for every query, optionally across threads.
    /// The output does not depend on `parallel`.
    pub fn batch_search(
        &self,
        queries: &[BitCode],
        k: usize,
        parallel: bool,
    ) -> Result<Vec<Vec<Neighbor>>> {
        if parallel {
            queries.par_iter().map(|q| self.search(q, k)).collect()
        } else {
            queries.iter().map(|q| self.search(q, k)).collect()
        }
    }

    /// Writes the codes as `BHC1` and the ids one per line.
    pub fn save<W1: Write, W2: Write>(&self, codes_out: &mut W1, ids_out: &mut W2) -> Result<()> {
        codes::write_codes(codes_out, self.bits, &self.codes())?;
        write_ids(ids_out, &self.ids)
    }

    pub fn load<R1: Read, R2: BufRead>(codes_in: &mut R1, ids_in: R2) -> Result<Self> {
        let (_, codes) = codes::read_codes(codes_in)?;
        let ids = read_ids(ids_in)?;
        Self::build(&codes, ids)
    }
}

pub fn write_ids<W: Write>(w: &mut W, ids: &[u64]) -> Result<()> {
    for id in ids {
        writeln!(w, "{id}")?;
    }
    Ok(())
}

pub fn read_ids<R: BufRead>(r: R) -> Result<Vec<u64>> {
    let mut ids = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        ids.push(line.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            msg: format!("bad id {line:?}"),
        })?);
    }
    Ok(ids)
}
