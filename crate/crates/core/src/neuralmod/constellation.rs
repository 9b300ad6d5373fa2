use num_complex::Complex64;

use super::net::{DecoderNet, EncoderNet};
use super::Error;
use crate::diffkit::{sigmoid, Tensor};
use crate::modem::bits_to_label;

/// Probabilities are clamped to `[ε, 1−ε]` before conversion to LLRs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Power-normalized learned constellation, indexed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    eta: Complex64,
    sigma2: f64,
}

impl Constellation {
    /// Normalizes raw encoder outputs.
    pub fn from_raw(raw: &[Complex64]) -> Result<Self, Error> {
        if !raw.len().is_power_of_two() || raw.len() < 2 {
            return Err(Error::Contract(format!(
                "constellation size {} is not a power of two >= 2",
                raw.len()
            )));
        }
        let (points, eta, sigma2) = power_normalize(raw)?;
        Ok(Constellation { points, eta, sigma2 })
    }

    /// Rebuilds from stored normalized points and statistics.
    pub fn from_parts(points: Vec<Complex64>, eta: Complex64, sigma2: f64) -> Result<Self, Error> {
        let c = Constellation { points, eta, sigma2 };
        c.validate(1e-9)?;
        Ok(c)
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    /// Pre-normalization mean η̃.
    pub fn eta(&self) -> Complex64 {
        self.eta
    }

    /// Pre-normalization variance σ̃².
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn mean(&self) -> Complex64 {
        self.points.iter().sum::<Complex64>() / self.points.len() as f64
    }

    pub fn power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.min((a - b).norm());
            }
        }
        d
    }

    /// Zero mean and unit power within `tol`, finite statistics, size 2^m.
    pub fn validate(&self, tol: f64) -> Result<(), Error> {
        let n = self.points.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::Contract(format!("constellation size {n}")));
        }
        if let Some(i) = self.points.iter().position(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::NonFinite(format!("constellation point {i}")));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Degenerate(format!("σ̃² = {}", self.sigma2)));
        }
        let mean = self.mean().norm();
        let power = self.power();
        if mean >= tol || (power - 1.0).abs() >= tol {
            return Err(Error::Contract(format!(
                "constellation has |mean| = {mean:e}, power = {power}"
            )));
        }
        Ok(())
    }
}

/// `x = (x̃ − η̃)/σ̃` with `σ̃² = mean |x̃ − η̃|²`.
pub fn power_normalize(raw: &[Complex64]) -> Result<(Vec<Complex64>, Complex64, f64), Error> {
    if raw.is_empty() {
        return Err(Error::Degenerate("no points".into()));
    }
    let n = raw.len() as f64;
    let eta = raw.iter().sum::<Complex64>() / n;
    let sigma2 = raw.iter().map(|x| (x - eta).norm_sqr()).sum::<f64>() / n;
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Degenerate(format!(
            "all points coincide or are non-finite (σ̃² = {sigma2})"
        )));
    }
    let s = sigma2.sqrt();
    Ok((raw.iter().map(|x| (x - eta) / s).collect(), eta, sigma2))
}

/// Encoder inputs for all labels: row `label` holds its MSB-first bits as ±1.
pub fn label_inputs(m: usize) -> Tensor {
    let count = 1usize << m;
    let data = (0..count)
        .flat_map(|label| (0..m).map(move |i| if label >> (m - 1 - i) & 1 == 1 { 1.0 } else { -1.0 }))
        .collect();
    Tensor::matrix(count, m, data).expect("sized above")
}

/// Runs the encoder (batch norm on running statistics) over every label.
pub fn enumerate_constellation(enc: &EncoderNet) -> Result<Constellation, Error> {
    let m = enc.bits_per_symbol();
    let out = enc.net.infer(&label_inputs(m))?;
    let raw: Vec<Complex64> = out
        .data()
        .chunks_exact(2)
        .map(|r| Complex64::new(r[0], r[1]))
        .collect();
    if let Some(label) = raw.iter().position(|p| !(p.re.is_finite() && p.im.is_finite())) {
        return Err(Error::NonFinite(format!("encoder output for label {label}")));
    }
    Constellation::from_raw(&raw)
}

pub fn nn_modulate(bits: &[u8], c: &Constellation) -> Result<Complex64, Error> {
    if bits.len() != c.bits_per_symbol() {
        return Err(Error::Contract(format!(
            "expected {} bits, got {}",
            c.bits_per_symbol(),
            bits.len()
        )));
    }
    Ok(c.points[bits_to_label(bits)])
}

fn check_sigma2(sigma2: f64) -> Result<(), Error> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::Contract(format!("noise variance {sigma2} must be positive")));
    }
    Ok(())
}

/// `ψ_k = −ln(πσ²) − |y − x_k|²/σ²` in label order.
pub fn feature_map(y: Complex64, sigma2: f64, c: &Constellation) -> Result<Vec<f64>, Error> {
    check_sigma2(sigma2)?;
    let k0 = -(std::f64::consts::PI * sigma2).ln();
    Ok(c.points.iter().map(|x| k0 - (y - x).norm_sqr() / sigma2).collect())
}

/// Features for a block of received symbols, one row per symbol.
pub fn feature_matrix(ys: &[Complex64], sigma2: f64, c: &Constellation) -> Result<Tensor, Error> {
    check_sigma2(sigma2)?;
    if ys.is_empty() {
        return Err(Error::Contract("no received symbols".into()));
    }
    let k0 = -(std::f64::consts::PI * sigma2).ln();
    let inv = 1.0 / sigma2;
    let mut data = Vec::with_capacity(ys.len() * c.order());
    for y in ys {
        data.extend(c.points.iter().map(|x| k0 - (y - x).norm_sqr() * inv));
    }
    Ok(Tensor::matrix(ys.len(), c.order(), data)?)
}

fn check_width(c: &Constellation, dec: &DecoderNet) -> Result<(), Error> {
    if dec.input_width() != c.order() {
        return Err(Error::Contract(format!(
            "decoder expects {} features, constellation has {} points",
            dec.input_width(),
            c.order()
        )));
    }
    Ok(())
}

/// Decoder logits for a block of received symbols (`p = sigmoid(logit)`).
pub fn demodulate_logits(
    ys: &[Complex64],
    sigma2: f64,
    c: &Constellation,
    dec: &DecoderNet,
) -> Result<Tensor, Error> {
    check_width(c, dec)?;
    Ok(dec.net.infer(&feature_matrix(ys, sigma2, c)?)?)
}

/// Bit probabilities `p_i = P(c_i = 1 | y)` for one symbol, clamped to
/// `[ε, 1 − ε]` so they stay strictly inside (0, 1).
pub fn nn_demodulate(
    y: Complex64,
    sigma2: f64,
    c: &Constellation,
    dec: &DecoderNet,
) -> Result<Vec<f64>, Error> {
    let z = demodulate_logits(&[y], sigma2, c, dec)?;
    Ok(z.data()
        .iter()
        .map(|&v| sigmoid(v).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
        .collect())
}

/// `q = p` if the bit is 1, else `1 − p`.
pub fn metric_q(bit: u8, p: f64) -> f64 {
    if bit == 1 {
        p
    } else {
        1.0 - p
    }
}

/// `ℓ = ln((1 − p)/p)` with `p` clamped to `[ε, 1 − ε]`; positive favours 0.
pub fn llr_from_prob(p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    ((1.0 - p) / p).ln()
}

/// LLR straight from a decoder logit: `−z`, limited to the same range as
/// [`llr_from_prob`].
pub fn llr_from_logit(z: f64) -> f64 {
    let bound = ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln();
    (-z).clamp(-bound, bound)
}
