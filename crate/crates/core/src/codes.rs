//! Binary hash codes.
//!
//! A code of length `L` is a vector in `{+1, -1}^L` stored as `ceil(L / 64)`
//! words. Bit `k` of the word concatenation is set iff dimension `k` is `+1`.
//! Bits at positions `>= L` are always zero, so distances are a plain XOR and
//! popcount over whole words.
//!
//! Codes are persisted in the `BHC1` format:
//!
//! ```text
//! "BHC1" | u32 N | u32 L | N records of ceil(L/64) u64 words   (all little-endian)
//! ```

use std::io::{Read, Write};
use std::ops::Deref;

use crate::error::check_dims;
use crate::wire;
use crate::{Error, Result};

pub const MAX_CODE_LENGTH: usize = 4096;

const BHC_MAGIC: &[u8; 4] = b"BHC1";

#[inline]
pub(crate) fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

fn check_length(len: usize) -> Result<()> {
    if (1..=MAX_CODE_LENGTH).contains(&len) {
        Ok(())
    } else {
        Err(Error::InvalidCodeLength(len))
    }
}

/// An `L`-bit binary hash code packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitCode {
    len: usize,
    words: Vec<u64>,
}

impl BitCode {
    /// Builds a code from raw words, clearing any bits past `len`.
    pub fn from_words(len: usize, mut words: Vec<u64>) -> Result<Self> {
        check_length(len)?;
        check_dims(words_for(len), words.len())?;
        let tail = len % 64;
        if tail != 0 {
            let last = words.len() - 1;
            words[last] &= (1u64 << tail) - 1;
        }
        Ok(Self { len, words })
    }

    /// The all `-1` code.
    pub fn zeros(len: usize) -> Result<Self> {
        check_length(len)?;
        Ok(Self {
            len,
            words: vec![0; words_for(len)],
        })
    }

    /// Packs a `{+1, -1}` sign vector.
    pub fn pack(signs: &[i8]) -> Result<Self> {
        check_length(signs.len())?;
        let mut words = vec![0u64; words_for(signs.len())];
        for (k, &s) in signs.iter().enumerate() {
            match s {
                1 => words[k / 64] |= 1u64 << (k % 64),
                -1 => {}
                other => {
                    return Err(Error::InvalidSign {
                        index: k,
                        value: other as i64,
                    })
                }
            }
        }
        Ok(Self {
            len: signs.len(),
            words,
        })
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.len)
            .map(|k| if self.bit(k) { 1 } else { -1 })
            .collect()
    }

    /// Code length `L` in bits.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn bit(&self, k: usize) -> bool {
        (self.words[k / 64] >> (k % 64)) & 1 == 1
    }

    /// Number of differing bits.
    pub fn hamming(&self, other: &BitCode) -> Result<u32> {
        check_dims(self.len, other.len)?;
        Ok(hamming_words(&self.words, &other.words))
    }

    /// Half the inner product of the two sign vectors, `(L - 2·hamming) / 2`.
    pub fn theta(&self, other: &BitCode) -> Result<f64> {
        let d = self.hamming(other)? as i64;
        Ok((self.len as i64 - 2 * d) as f64 / 2.0)
    }
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming(a: &BitCode, b: &BitCode) -> Result<u32> {
    a.hamming(b)
}

pub fn theta_binary(a: &BitCode, b: &BitCode) -> Result<f64> {
    a.theta(b)
}

/// A relaxed real-valued code `u`. Every entry is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct RealCode(Vec<f64>);

impl RealCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "real code",
                index,
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }
}

impl Deref for RealCode {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for RealCode {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// `b = sgn(u)` with `sgn(x) = +1` iff `x > 0`; zero maps to `-1`.
pub fn sign_quantize(u: &[f64]) -> Result<BitCode> {
    check_length(u.len())?;
    let mut words = vec![0u64; words_for(u.len())];
    for (k, &v) in u.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                what: "relaxed code",
                index: k,
            });
        }
        if v > 0.0 {
            words[k / 64] |= 1u64 << (k % 64);
        }
    }
    Ok(BitCode {
        len: u.len(),
        words,
    })
}

/// `sgn(x)` as a real, for the quantization residual.
#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Writes codes in `BHC1` format. Every code must have length `len`.
pub fn write_codes<W: Write>(w: &mut W, len: usize, codes: &[BitCode]) -> Result<()> {
    check_length(len)?;
    w.write_all(BHC_MAGIC)?;
    wire::write_u32(w, wire::u32_field(codes.len(), "BHC1 file")?)?;
    wire::write_u32(w, len as u32)?;
    for code in codes {
        check_dims(len, code.len())?;
        for word in &code.words {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a `BHC1` stream, returning `(L, codes)`.
pub fn read_codes<R: Read>(r: &mut R) -> Result<(usize, Vec<BitCode>)> {
    const WHAT: &str = "BHC1 file";
    wire::expect_magic(r, BHC_MAGIC, WHAT)?;
    let n = wire::read_u32(r, WHAT)? as usize;
    let len = wire::read_u32(r, WHAT)? as usize;
    check_length(len).map_err(|e| Error::format(WHAT, e.to_string()))?;
    let stride = words_for(len);
    let mut codes = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let words = (0..stride)
            .map(|_| wire::read_u64(r, WHAT))
            .collect::<Result<Vec<_>>>()?;
        codes.push(BitCode::from_words(len, words)?);
    }
    wire::expect_eof(r, WHAT)?;
    Ok((len, codes))
}
