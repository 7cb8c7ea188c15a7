//! Triplet-label likelihood loss over relaxed codes.
//!
//! For a triplet `(q, p, n)` with `Θ_ij = ½⟨u_i, u_j⟩`, the label likelihood is
//! `σ(x)` with `x = Θ_qp − Θ_qn − α`. The loss is
//!
//! ```text
//! L = Σ_m softplus(−x_m) + λ Σ_n ||b_n − u_n||²,   b_n = sgn(u_n)
//! ```
//!
//! and its gradient with respect to `u_n` treats `b_n` as a constant.

use std::fmt;
use std::str::FromStr;

use crate::codes::{sgn, RealCode};
use crate::error::check_dims;
use crate::{Error, Result};

/// Index triple asserting that `q` is more similar to `p` than to `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub q: usize,
    pub p: usize,
    pub n: usize,
}

impl Triplet {
    pub fn new(q: usize, p: usize, n: usize) -> Result<Self> {
        let t = Self { q, p, n };
        t.check_distinct()?;
        Ok(t)
    }

    fn check_distinct(&self) -> Result<()> {
        if self.q == self.p || self.q == self.n || self.p == self.n {
            return Err(Error::DegenerateTriplet {
                q: self.q,
                p: self.p,
                n: self.n,
            });
        }
        Ok(())
    }

    pub(crate) fn validate(&self, len: usize) -> Result<()> {
        for index in [self.q, self.p, self.n] {
            if index >= len {
                return Err(Error::IndexOutOfRange { index, len });
            }
        }
        self.check_distinct()
    }
}

/// Which images contribute to the quantization penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuantizationSum {
    /// Only images referenced by at least one triplet.
    #[default]
    Referenced,
    /// Every code passed in.
    Full,
}

impl fmt::Display for QuantizationSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuantizationSum::Referenced => "referenced",
            QuantizationSum::Full => "full",
        })
    }
}

impl FromStr for QuantizationSum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "referenced" => Ok(QuantizationSum::Referenced),
            "full" => Ok(QuantizationSum::Full),
            other => Err(Error::InvalidConfig(format!(
                "unknown quantization sum {other:?} (expected referenced or full)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Margin `α`, in Θ units.
    pub alpha: f64,
    /// Quantization weight `λ`.
    pub lambda: f64,
    pub quantization: QuantizationSum,
}

impl LossConfig {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            lambda,
            quantization: QuantizationSum::Referenced,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `α = L/2`, `λ = 100`.
    pub fn for_code_length(len: usize) -> Self {
        Self {
            alpha: len as f64 / 2.0,
            lambda: 100.0,
            quantization: QuantizationSum::Referenced,
        }
    }

    pub fn with_quantization(mut self, q: QuantizationSum) -> Self {
        self.quantization = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x) = −softplus(−x)`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// Gradient scale `1 − σ(x)` multiplying every triplet term of the gradient.
#[inline]
pub fn margin_factor(x: f64) -> f64 {
    sigmoid(-x)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn theta_relaxed(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(0.5 * dot(a, b))
}

/// The sigmoid argument `x = Θ_qp − Θ_qn − α`.
#[inline]
fn triplet_arg(uq: &[f64], up: &[f64], un: &[f64], alpha: f64) -> f64 {
    0.5 * dot(uq, up) - 0.5 * dot(uq, un) - alpha
}

/// `log σ(Θ_qp − Θ_qn − α)`; always `<= 0`.
pub fn triplet_log_prob(uq: &[f64], up: &[f64], un: &[f64], alpha: f64) -> Result<f64> {
    check_dims(uq.len(), up.len())?;
    check_dims(uq.len(), un.len())?;
    if !alpha.is_finite() {
        return Err(Error::NonFinite {
            what: "margin",
            index: 0,
        });
    }
    for (what, u) in [("query code", uq), ("positive code", up), ("negative code", un)] {
        if let Some(index) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what, index });
        }
    }
    Ok(log_sigmoid(triplet_arg(uq, up, un, alpha)))
}

/// The two loss components, as sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    /// `Σ_m −log σ(x_m)`.
    pub nll: f64,
    /// `Σ_n ||b_n − u_n||²` over the configured domain.
    pub qerr: f64,
    /// `Σ_m (1 − σ(x_m))`.
    pub factor_sum: f64,
    pub triplets: usize,
    /// Number of images in the quantization domain.
    pub images: usize,
}

impl LossTerms {
    pub fn total(&self, lambda: f64) -> f64 {
        self.nll + lambda * self.qerr
    }
}

fn validate_inputs(triplets: &[Triplet], codes: &[RealCode]) -> Result<usize> {
    let len = codes.first().map_or(0, |c| c.len());
    for c in codes {
        check_dims(len, c.len())?;
    }
    for t in triplets {
        t.validate(codes.len())?;
    }
    Ok(len)
}

/// Sorted indices of the images that receive the quantization penalty.
fn quantization_domain(triplets: &[Triplet], n_codes: usize, mode: QuantizationSum) -> Vec<usize> {
    match mode {
        QuantizationSum::Full => (0..n_codes).collect(),
        QuantizationSum::Referenced => {
            let mut seen = vec![false; n_codes];
            for t in triplets {
                seen[t.q] = true;
                seen[t.p] = true;
                seen[t.n] = true;
            }
            (0..n_codes).filter(|&i| seen[i]).collect()
        }
    }
}

fn quantization_error(u: &[f64]) -> f64 {
    u.iter()
        .map(|&v| {
            let r = sgn(v) - v;
            r * r
        })
        .sum()
}

/// Evaluates both loss components without the gradient.
pub fn loss_terms(triplets: &[Triplet], codes: &[RealCode], cfg: &LossConfig) -> Result<LossTerms> {
    cfg.validate()?;
    validate_inputs(triplets, codes)?;
    let mut terms = LossTerms {
        triplets: triplets.len(),
        ..LossTerms::default()
    };
    for t in triplets {
        let x = triplet_arg(&codes[t.q], &codes[t.p], &codes[t.n], cfg.alpha);
        terms.nll += softplus(-x);
        terms.factor_sum += margin_factor(x);
    }
    let domain = quantization_domain(triplets, codes.len(), cfg.quantization);
    terms.images = domain.len();
    terms.qerr = domain.iter().map(|&i| quantization_error(&codes[i])).sum();
    Ok(terms)
}

/// `Σ_m −log σ(x_m) + λ Σ_n ||sgn(u_n) − u_n||²`.
pub fn total_loss(triplets: &[Triplet], codes: &[RealCode], cfg: &LossConfig) -> Result<f64> {
    Ok(loss_terms(triplets, codes, cfg)?.total(cfg.lambda))
}

/// `∂L/∂u_n` for every code, holding `b_n = sgn(u_n)` fixed.
pub fn grad_u(triplets: &[Triplet], codes: &[RealCode], cfg: &LossConfig) -> Result<Vec<RealCode>> {
    Ok(loss_and_grad(triplets, codes, cfg)?.1)
}

/// Loss components and gradient in one pass.
///
/// Triplet terms are accumulated in triplet order, so the result does not
/// depend on anything but the inputs.
pub fn loss_and_grad(
    triplets: &[Triplet],
    codes: &[RealCode],
    cfg: &LossConfig,
) -> Result<(LossTerms, Vec<RealCode>)> {
    cfg.validate()?;
    let len = validate_inputs(triplets, codes)?;
    let mut grad = vec![vec![0.0; len]; codes.len()];
    let mut terms = LossTerms {
        triplets: triplets.len(),
        ..LossTerms::default()
    };

    for t in triplets {
        let (uq, up, un) = (&codes[t.q], &codes[t.p], &codes[t.n]);
        let x = triplet_arg(uq, up, un, cfg.alpha);
        let f = margin_factor(x);
        terms.nll += softplus(-x);
        terms.factor_sum += f;
        let h = 0.5 * f;
        for k in 0..len {
            grad[t.q][k] -= h * (up[k] - un[k]);
        }
        for k in 0..len {
            grad[t.p][k] -= h * uq[k];
        }
        for k in 0..len {
            grad[t.n][k] += h * uq[k];
        }
    }

    let domain = quantization_domain(triplets, codes.len(), cfg.quantization);
    terms.images = domain.len();
    for &i in &domain {
        let u = &codes[i];
        terms.qerr += quantization_error(u);
        for (g, &v) in grad[i].iter_mut().zip(u.iter()) {
            *g += 2.0 * cfg.lambda * (v - sgn(v));
        }
    }

    let grad = grad
        .into_iter()
        .map(|g| {
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    what: "loss gradient",
                    index,
                });
            }
            Ok(RealCode::from_vec_unchecked(g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((terms, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rc(v: &[f64]) -> RealCode {
        RealCode::new(v.to_vec()).unwrap()
    }

    /// Independent evaluation of the loss straight from its definition,
    /// using the literal `log(1 + e^x)` form (fine for moderate arguments).
    fn oracle_loss(triplets: &[Triplet], u: &[Vec<f64>], alpha: f64, lambda: f64) -> f64 {
        let theta = |i: usize, j: usize| {
            let mut s = 0.0;
            for k in 0..u[i].len() {
                s += u[i][k] * u[j][k];
            }
            s / 2.0
        };
        let mut nll = 0.0;
        let mut referenced = std::collections::BTreeSet::new();
        for t in triplets {
            let g = theta(t.q, t.p) - theta(t.q, t.n) - alpha;
            nll -= g - (1.0 + g.exp()).ln();
            referenced.extend([t.q, t.p, t.n]);
        }
        let mut q = 0.0;
        for &i in &referenced {
            for &v in &u[i] {
                let b = if v > 0.0 { 1.0 } else { -1.0 };
                q += (b - v) * (b - v);
            }
        }
        nll + lambda * q
    }

    fn random_instance(seed: u64) -> (Vec<Triplet>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                (0..12)
                    .map(|_| {
                        let m = rng.random_range(0.05..1.5);
                        if rng.random::<bool>() {
                            m
                        } else {
                            -m
                        }
                    })
                    .collect()
            })
            .collect();
        let mut triplets = Vec::new();
        while triplets.len() < 10 {
            let (q, p, n) = (
                rng.random_range(0..8),
                rng.random_range(0..8),
                rng.random_range(0..8),
            );
            if let Ok(t) = Triplet::new(q, p, n) {
                triplets.push(t);
            }
        }
        (triplets, u)
    }

    #[test]
    fn theta_relaxed_examples() {
        assert_eq!(theta_relaxed(&[1.0; 4], &[1.0; 4]).unwrap(), 2.0);
        assert_eq!(theta_relaxed(&[0.3, -2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(theta_relaxed(&[1.0], &[1.0, 2.0]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..17).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..17).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut naive = 0.0;
        for k in 0..17 {
            naive += a[k] * b[k];
        }
        assert!((theta_relaxed(&a, &b).unwrap() - naive / 2.0).abs() < 1e-14);
    }

    #[test]
    fn log_prob_at_zero_argument_is_log_half() {
        // Θ_qp = 1, Θ_qn = 0, α = 1.
        let lp = triplet_log_prob(&[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn log_prob_asymptotes() {
        // gap − α = ±100 via Θ_qp = ±100, Θ_qn = 0, α = 0.
        let q = [10.0, 10.0];
        let lp = triplet_log_prob(&q, &[20.0, 0.0], &[0.0, 0.0], 0.0).unwrap();
        assert!(lp < 0.0 && lp > -1e-43);
        assert!((lp + 3.720075976020836e-44).abs() < 1e-57);
        let lp = triplet_log_prob(&q, &[-20.0, 0.0], &[0.0, 0.0], 0.0).unwrap();
        assert!((lp + 100.0).abs() < 1e-12);
    }

    #[test]
    fn log_prob_rejects_bad_input() {
        assert!(triplet_log_prob(&[1.0], &[1.0, 2.0], &[1.0], 0.0).is_err());
        assert!(triplet_log_prob(&[f64::NAN], &[1.0], &[1.0], 0.0).is_err());
        assert!(triplet_log_prob(&[1.0], &[1.0], &[1.0], f64::INFINITY).is_err());
    }

    #[test]
    fn log_prob_monotone_in_gap_and_margin() {
        let q = [1.0, 0.0];
        let n = [0.0, 0.0];
        let mut prev = f64::NEG_INFINITY;
        for i in -200..=200 {
            let gap = i as f64 * 0.25;
            let lp = triplet_log_prob(&q, &[2.0 * gap, 0.0], &n, 3.0).unwrap();
            assert!(lp > prev);
            prev = lp;
        }
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let lp = triplet_log_prob(&q, &[4.0, 0.0], &n, i as f64 * 0.2).unwrap();
            assert!(lp < prev);
            prev = lp;
        }
    }

    #[test]
    fn softplus_matches_direct_form() {
        for i in -3000..=3000 {
            let x = i as f64 * 0.01;
            let direct = x.exp().ln_1p();
            let rel = (softplus(x) - direct).abs() / direct;
            assert!(rel < 1e-12, "x={x} rel={rel}");
        }
        for &x in &[1e6, -1e6, 745.0, -745.0, 0.0] {
            assert!(softplus(x).is_finite());
            assert!(sigmoid(x).is_finite());
            assert!(log_sigmoid(x).is_finite());
        }
    }

    #[test]
    fn margin_factor_increases_with_alpha() {
        for &g in &[0.5, 2.0, 6.0] {
            let mut prev = 0.0;
            for i in 0..=40 {
                let f = margin_factor(g - i as f64 * 0.5);
                assert!(f > prev);
                prev = f;
            }
            assert!(margin_factor(g) < 0.5);
            assert_eq!(margin_factor(g - g), 0.5);
        }
    }

    #[test]
    fn single_triplet_at_margin_costs_log_two() {
        let u = vec![rc(&[1.0, 1.0]), rc(&[1.0, 1.0]), rc(&[0.0, 0.0])];
        let cfg = LossConfig::new(1.0, 0.0).unwrap();
        let l = total_loss(&[Triplet::new(0, 1, 2).unwrap()], &u, &cfg).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn quantization_only_loss() {
        let u = vec![rc(&[0.5, -0.5])];
        let cfg = LossConfig::new(0.0, 1.0)
            .unwrap()
            .with_quantization(QuantizationSum::Full);
        assert_eq!(total_loss(&[], &u, &cfg).unwrap(), 0.5);
        let referenced = LossConfig::new(0.0, 1.0).unwrap();
        assert_eq!(total_loss(&[], &u, &referenced).unwrap(), 0.0);
    }

    #[test]
    fn total_loss_matches_independent_evaluation() {
        for seed in 0..5 {
            let (triplets, u) = random_instance(seed);
            let codes: Vec<RealCode> = u.iter().map(|v| rc(v)).collect();
            let cfg = LossConfig::new(6.0, 100.0).unwrap();
            let got = total_loss(&triplets, &codes, &cfg).unwrap();
            let want = oracle_loss(&triplets, &u, 6.0, 100.0);
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn decomposition_is_exact() {
        let (triplets, u) = random_instance(9);
        let codes: Vec<RealCode> = u.iter().map(|v| rc(v)).collect();
        let with = LossConfig::new(2.0, 100.0).unwrap();
        let without = LossConfig::new(2.0, 0.0).unwrap();
        let terms = loss_terms(&triplets, &codes, &with).unwrap();
        assert_eq!(
            total_loss(&triplets, &codes, &with).unwrap(),
            total_loss(&triplets, &codes, &without).unwrap() + 100.0 * terms.qerr
        );
    }

    #[test]
    fn loss_validates_indices_and_dims() {
        let u = vec![rc(&[1.0]), rc(&[1.0]), rc(&[1.0])];
        let cfg = LossConfig::new(0.0, 0.0).unwrap();
        let bad = Triplet { q: 0, p: 1, n: 3 };
        assert!(matches!(
            total_loss(&[bad], &u, &cfg),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
        assert!(grad_u(&[bad], &u, &cfg).is_err());
        let ragged = vec![rc(&[1.0]), rc(&[1.0, 2.0]), rc(&[1.0])];
        assert!(matches!(
            total_loss(&[Triplet::new(0, 1, 2).unwrap()], &ragged, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Triplet::new(1, 1, 2).is_err());
        assert!(LossConfig::new(-1.0, 0.0).is_err());
        assert!(LossConfig::new(0.0, f64::NAN).is_err());
    }

    #[test]
    fn gradient_single_triplet_hand_example() {
        // x = ½(1) − ½(−1) − 1 = 0, so the factor is ½.
        let u = vec![rc(&[1.0, 0.0]), rc(&[1.0, 0.0]), rc(&[-1.0, 0.0])];
        let cfg = LossConfig::new(1.0, 0.0).unwrap();
        let g = grad_u(&[Triplet::new(0, 1, 2).unwrap()], &u, &cfg).unwrap();
        assert_eq!(&g[0][..], &[-0.5, 0.0]);
        assert_eq!(&g[1][..], &[-0.25, 0.0]);
        assert_eq!(&g[2][..], &[0.25, 0.0]);
    }

    #[test]
    fn gradient_is_zero_for_unreferenced_images() {
        let u = vec![rc(&[1.0, 0.3]), rc(&[1.0, 0.2]), rc(&[-1.0, 0.1]), rc(&[0.7, 0.7])];
        let cfg = LossConfig::new(1.0, 0.0).unwrap();
        let g = grad_u(&[Triplet::new(0, 1, 2).unwrap()], &u, &cfg).unwrap();
        assert_eq!(&g[3][..], &[0.0, 0.0]);
        let cfg = LossConfig::new(1.0, 5.0).unwrap();
        let g = grad_u(&[Triplet::new(0, 1, 2).unwrap()], &u, &cfg).unwrap();
        assert_eq!(&g[3][..], &[0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-4;
        for seed in 0..4 {
            let (triplets, u) = random_instance(100 + seed);
            for (alpha, lambda) in [(0.0, 0.0), (6.0, 100.0)] {
                let cfg = LossConfig::new(alpha, lambda).unwrap();
                let codes: Vec<RealCode> = u.iter().map(|v| rc(v)).collect();
                let g = grad_u(&triplets, &codes, &cfg).unwrap();
                for i in 0..u.len() {
                    for k in 0..u[i].len() {
                        let mut plus = u.clone();
                        plus[i][k] += h;
                        let mut minus = u.clone();
                        minus[i][k] -= h;
                        let fd = (oracle_loss(&triplets, &plus, alpha, lambda)
                            - oracle_loss(&triplets, &minus, alpha, lambda))
                            / (2.0 * h);
                        let scale = g[i][k].abs().max(fd.abs());
                        if scale < 1e-9 {
                            continue;
                        }
                        assert!((g[i][k] - fd).abs() / scale < 1e-4, "seed {seed} i {i} k {k}: {} vs {fd}", g[i][k]);
                    }
                }
            }
        }
    }

    #[test]
    fn full_mode_penalizes_every_code() {
        let u = vec![rc(&[0.5]), rc(&[0.5]), rc(&[-0.5]), rc(&[0.25])];
        let t = [Triplet::new(0, 1, 2).unwrap()];
        let referenced = LossConfig::new(0.0, 1.0).unwrap();
        let full = referenced.with_quantization(QuantizationSum::Full);
        let a = loss_terms(&t, &u, &referenced).unwrap();
        let b = loss_terms(&t, &u, &full).unwrap();
        assert_eq!(a.images, 3);
        assert_eq!(b.images, 4);
        assert_eq!(b.qerr - a.qerr, 0.75 * 0.75);
        let g = grad_u(&t, &u, &full).unwrap();
        assert_eq!(g[3][0], 2.0 * (0.25 - 1.0));
    }
}
