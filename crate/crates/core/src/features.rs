//! Dense feature matrices and the `FVC1` file format.
//!
//! ```text
//! "FVC1" | u32 N | u32 D | N×D f32 row-major   (all little-endian)
//! ```
//!
//! Values are stored as 32-bit floats and widened to `f64` on load.

use std::io::{Read, Write};

use crate::error::check_dims;
use crate::wire;
use crate::{Error, Result};

const FVC_MAGIC: &[u8; 4] = b"FVC1";

/// `rows × cols` finite values, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidConfig("feature dimension must be >= 1".into()));
        }
        check_dims(rows * cols, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
                index,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().ok_or(Error::Empty("feature rows"))?.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dims(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// The listed rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Writes `FVC1`, narrowing every value to `f32`.
    pub fn write_fvc<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(FVC_MAGIC)?;
        wire::write_u32(w, wire::u32_field(self.rows, "FVC1 file")?)?;
        wire::write_u32(w, wire::u32_field(self.cols, "FVC1 file")?)?;
        for &v in &self.data {
            let narrowed = v as f32;
            if !narrowed.is_finite() {
                return Err(Error::format("FVC1 file", format!("{v} overflows f32")));
            }
            w.write_all(&narrowed.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_fvc<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "FVC1 file";
        wire::expect_magic(r, FVC_MAGIC, WHAT)?;
        let rows = wire::read_u32(r, WHAT)? as usize;
        let cols = wire::read_u32(r, WHAT)? as usize;
        if cols == 0 {
            return Err(Error::format(WHAT, "feature dimension is 0"));
        }
        let total = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(WHAT, "N×D overflows"))?;
        let mut data = Vec::with_capacity(total.min(1 << 24));
        for i in 0..total {
            let v = wire::read_f32(r, WHAT)?;
            if !v.is_finite() {
                return Err(Error::format(
                    WHAT,
                    format!("non-finite value at row {}, column {}", i / cols, i % cols),
                ));
            }
            data.push(v as f64);
        }
        wire::expect_eof(r, WHAT)?;
        Ok(Self { rows, cols, data })
    }
}
