//! Trainable maps from feature vectors to relaxed codes.
//!
//! Two architectures are supported:
//!
//! - `linear`: `u = W x + c`
//! - `mlp1`:   `u = W2 tanh(W1 x + c1) + c2`
//!
//! The output layer has one unit per code bit and no activation; codes are
//! `sgn(u)`. Checkpoints use the `ENC1` format:
//!
//! ```text
//! "ENC1" | u8 arch (0 linear, 1 mlp1) | u32 D | u32 H | u32 L
//!        | per layer: weights row-major f64, then bias f64   (all little-endian)
//! ```
//!
//! `H` is written as 0 for the linear architecture.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codes::{sign_quantize, BitCode, RealCode, MAX_CODE_LENGTH};
use crate::error::check_dims;
use crate::wire;
use crate::{Error, Result};

const ENC_MAGIC: &[u8; 4] = b"ENC1";
const INIT_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Linear,
    Mlp1,
}

impl Architecture {
    fn tag(self) -> u8 {
        match self {
            Architecture::Linear => 0,
            Architecture::Mlp1 => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::Linear),
            1 => Ok(Architecture::Mlp1),
            t => Err(Error::format("ENC1 file", format!("unknown architecture tag {t}"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Linear => "linear",
            Architecture::Mlp1 => "mlp1",
        })
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Architecture::Linear),
            "mlp1" => Ok(Architecture::Mlp1),
            other => Err(Error::InvalidConfig(format!(
                "unknown architecture {other:?} (expected linear or mlp1)"
            ))),
        }
    }
}

/// A dense layer `y = W x + b` with `W` stored row-major (`rows × cols`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows).map(|r| {
            self.row(r)
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + self.bias[r]
        }));
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Encoder parameters. Immutable in use; the trainer produces new versions.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    arch: Architecture,
    input_dim: usize,
    hidden_dim: usize,
    code_length: usize,
    layers: Vec<Layer>,
}

/// Gradients with the same shape as [`EncoderParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

impl EncoderGrads {
    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.values().all(|&v| v == 0.0))
    }

    pub fn scale(&mut self, s: f64) {
        for layer in &mut self.layers {
            for v in layer.values_mut() {
                *v *= s;
            }
        }
    }
}

fn check_shape(arch: Architecture, d: usize, h: usize, l: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidConfig("input dimension must be >= 1".into()));
    }
    if !(1..=MAX_CODE_LENGTH).contains(&l) {
        return Err(Error::InvalidCodeLength(l));
    }
    if arch == Architecture::Mlp1 && h == 0 {
        return Err(Error::InvalidConfig("mlp1 needs hidden dimension >= 1".into()));
    }
    Ok(())
}

fn layer_shapes(arch: Architecture, d: usize, h: usize, l: usize) -> Vec<(usize, usize)> {
    match arch {
        Architecture::Linear => vec![(l, d)],
        Architecture::Mlp1 => vec![(h, d), (l, h)],
    }
}

impl EncoderParams {
    /// Gaussian(0, 0.01²) weights and zero biases, deterministic in `seed`.
    ///
    /// `hidden_dim` is ignored for the linear architecture.
    pub fn init(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        code_length: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut params = Self::zeros(arch, input_dim, hidden_dim, code_length)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for layer in &mut params.layers {
            for w in &mut layer.weights {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(params)
    }

    pub fn zeros(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        code_length: usize,
    ) -> Result<Self> {
        check_shape(arch, input_dim, hidden_dim, code_length)?;
        let hidden_dim = if arch == Architecture::Linear { 0 } else { hidden_dim };
        let layers = layer_shapes(arch, input_dim, hidden_dim, code_length)
            .into_iter()
            .map(|(r, c)| Layer::zeros(r, c))
            .collect();
        Ok(Self {
            arch,
            input_dim,
            hidden_dim,
            code_length,
            layers,
        })
    }

    /// Builds parameters from explicit layers, validating shapes and finiteness.
    pub fn from_layers(
        arch: Architecture,
        input_dim: usize,
        hidden_dim: usize,
        code_length: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        let mut params = Self::zeros(arch, input_dim, hidden_dim, code_length)?;
        check_dims(params.layers.len(), layers.len())?;
        for (want, got) in params.layers.iter().zip(&layers) {
            check_dims(want.rows, got.rows)?;
            check_dims(want.cols, got.cols)?;
            check_dims(want.rows * want.cols, got.weights.len())?;
            check_dims(want.rows, got.bias.len())?;
            if let Some(index) = got.values().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "encoder parameters",
                    index,
                });
            }
        }
        params.layers = layers;
        Ok(params)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// 0 for the linear architecture.
    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        for layer in &mut out.layers {
            for v in layer.values_mut() {
                *v *= t;
            }
        }
        out
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_dims(self.input_dim, x.len())?;
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature vector",
                index,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<RealCode> {
        self.check_input(x)?;
        let (_, u) = self.forward_raw(x);
        RealCode::new(u)
    }

    /// Returns `(hidden activations, output)`; hidden is empty for linear.
    fn forward_raw(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut u = Vec::with_capacity(self.code_length);
        match self.arch {
            Architecture::Linear => {
                self.layers[0].apply(x, &mut u);
                (Vec::new(), u)
            }
            Architecture::Mlp1 => {
                let mut hidden = Vec::with_capacity(self.hidden_dim);
                self.layers[0].apply(x, &mut hidden);
                for v in &mut hidden {
                    *v = v.tanh();
                }
                self.layers[1].apply(&hidden, &mut u);
                (hidden, u)
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Result<BitCode> {
        sign_quantize(&self.forward(x)?)
    }

    /// Parameter gradients given the upstream gradient `∂L/∂u`.
    pub fn backward(&self, x: &[f64], grad_u: &[f64]) -> Result<EncoderGrads> {
        let mut grads = self.zero_grads();
        self.accumulate_backward(x, grad_u, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale · ∂L/∂θ` into `grads`.
    pub fn accumulate_backward(
        &self,
        x: &[f64],
        grad_u: &[f64],
        scale: f64,
        grads: &mut EncoderGrads,
    ) -> Result<()> {
        self.check_input(x)?;
        check_dims(self.code_length, grad_u.len())?;
        check_dims(self.layers.len(), grads.layers.len())?;
        match self.arch {
            Architecture::Linear => {
                outer_accumulate(&mut grads.layers[0], grad_u, x, scale);
            }
            Architecture::Mlp1 => {
                let (hidden, _) = self.forward_raw(x);
                outer_accumulate(&mut grads.layers[1], grad_u, &hidden, scale);
                let out = &self.layers[1];
                let grad_pre: Vec<f64> = (0..self.hidden_dim)
                    .map(|j| {
                        let back: f64 = (0..out.rows)
                            .map(|r| out.weights[r * out.cols + j] * grad_u[r])
                            .sum();
                        back * (1.0 - hidden[j] * hidden[j])
                    })
                    .collect();
                outer_accumulate(&mut grads.layers[0], &grad_pre, x, scale);
            }
        }
        Ok(())
    }

    /// `θ ← θ − lr · g`.
    pub fn apply_gradient(&mut self, grads: &EncoderGrads, lr: f64) -> Result<()> {
        check_dims(self.layers.len(), grads.layers.len())?;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            check_dims(layer.weights.len(), g.weights.len())?;
            for (w, d) in layer.values_mut().zip(g.values()) {
                *w -= lr * d;
            }
        }
        if let Some(index) = self
            .layers
            .iter()
            .flat_map(|l| l.values())
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                what: "encoder parameters",
                index,
            });
        }
        Ok(())
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(ENC_MAGIC)?;
        w.write_all(&[self.arch.tag()])?;
        for dim in [self.input_dim, self.hidden_dim, self.code_length] {
            wire::write_u32(w, wire::u32_field(dim, "ENC1 file")?)?;
        }
        for layer in &self.layers {
            for v in layer.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self> {
        const WHAT: &str = "ENC1 file";
        wire::expect_magic(r, ENC_MAGIC, WHAT)?;
        let arch = Architecture::from_tag(wire::read_u8(r, WHAT)?)?;
        let d = wire::read_u32(r, WHAT)? as usize;
        let h = wire::read_u32(r, WHAT)? as usize;
        let l = wire::read_u32(r, WHAT)? as usize;
        let mut params =
            Self::zeros(arch, d, h, l).map_err(|e| Error::format(WHAT, e.to_string()))?;
        for layer in &mut params.layers {
            for v in layer.values_mut() {
                *v = wire::read_f64(r, WHAT)?;
            }
        }
        wire::expect_eof(r, WHAT)?;
        let layers = std::mem::take(&mut params.layers);
        Self::from_layers(arch, d, h, l, layers)
    }
}

#[inline]
fn outer_accumulate(layer: &mut Layer, rows: &[f64], cols: &[f64], scale: f64) {
    for (r, &g) in rows.iter().enumerate() {
        let g = g * scale;
        if g == 0.0 {
            continue;
        }
        for (w, &c) in layer.weights[r * layer.cols..(r + 1) * layer.cols]
            .iter_mut()
            .zip(cols)
        {
            *w += g * c;
        }
        layer.bias[r] += g;
    }
}
