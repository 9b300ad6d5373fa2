use num_complex::Complex64;

use super::{bits_to_label, Error};
use crate::diffkit::log_sum_exp;

/// Square QAM with per-axis Gray labels, scaled to unit average power.
///
/// Label bits are read MSB first; the first `m/2` select the in-phase level
/// and the last `m/2` the quadrature level. Axis value 0 maps to the most
/// positive amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    bits: usize,
    points: Vec<Complex64>,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl QamConstellation {
    pub fn new(order: usize) -> Result<Self, Error> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::UnsupportedOrder(order));
        }
        let bits = order.trailing_zeros() as usize;
        let half = bits / 2;
        let levels = 1usize << half;
        let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        let amp = |g: usize| ((levels - 1) as f64 - 2.0 * gray_decode(g) as f64) * scale;
        let points = (0..order)
            .map(|label| {
                let i_bits = label >> half;
                let q_bits = label & (levels - 1);
                Complex64::new(amp(i_bits), amp(q_bits))
            })
            .collect();
        Ok(QamConstellation { bits, points })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits
    }

    /// Points indexed by label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Complex64, Error> {
        if bits.len() != self.bits {
            return Err(Error::Length {
                expected: self.bits,
                got: bits.len(),
            });
        }
        Ok(self.points[bits_to_label(bits)])
    }

    pub fn hard_decision(&self, y: Complex64) -> usize {
        nearest(&self.points, y)
    }
}

pub fn make_gray_qam(order: usize) -> Result<QamConstellation, Error> {
    QamConstellation::new(order)
}

pub fn qam_modulate(bits: &[u8], c: &QamConstellation) -> Result<Complex64, Error> {
    c.modulate(bits)
}

/// Index of the point closest to `y`.
pub fn nearest(points: &[Complex64], y: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in points.iter().enumerate() {
        let d = (y - p).norm_sqr();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemapKind {
    #[default]
    Exact,
    MaxLog,
}

/// Bit LLRs `ln Σ_{x: b_i=0} e^{−|y−x|²/σ²} − ln Σ_{x: b_i=1} e^{−|y−x|²/σ²}`
/// for any labeled constellation (`points[label]`, MSB-first labels).
pub fn bit_llrs_into(
    points: &[Complex64],
    y: Complex64,
    sigma2: f64,
    kind: DemapKind,
    out: &mut [f64],
) -> Result<(), Error> {
    if sigma2 <= 0.0 || !sigma2.is_finite() {
        return Err(Error::NoiseVariance(sigma2));
    }
    let m = out.len();
    if points.len() != 1 << m {
        return Err(Error::Length {
            expected: 1 << m,
            got: points.len(),
        });
    }
    let metric: Vec<f64> = points.iter().map(|p| -(y - p).norm_sqr() / sigma2).collect();
    match kind {
        DemapKind::MaxLog => {
            for (i, o) in out.iter_mut().enumerate() {
                let shift = m - 1 - i;
                let (mut best0, mut best1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (label, &d) in metric.iter().enumerate() {
                    if label >> shift & 1 == 0 {
                        best0 = best0.max(d);
                    } else {
                        best1 = best1.max(d);
                    }
                }
                *o = best0 - best1;
            }
        }
        DemapKind::Exact => {
            let top = metric.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = metric.iter().map(|d| (d - top).exp()).collect();
            for (i, o) in out.iter_mut().enumerate() {
                let shift = m - 1 - i;
                let (mut s0, mut s1) = (0.0, 0.0);
                for (label, &wk) in w.iter().enumerate() {
                    if label >> shift & 1 == 0 {
                        s0 += wk;
                    } else {
                        s1 += wk;
                    }
                }
                *o = if s0 > 1e-250 && s1 > 1e-250 {
                    s0.ln() - s1.ln()
                } else {
                    // one subset underflowed relative to the global maximum
                    let (a, b): (Vec<f64>, Vec<f64>) = metric
                        .iter()
                        .enumerate()
                        .map(|(label, &d)| (label >> shift & 1, d))
                        .fold((Vec::new(), Vec::new()), |(mut a, mut b), (bit, d)| {
                            if bit == 0 {
                                a.push(d)
                            } else {
                                b.push(d)
                            }
                            (a, b)
                        });
                    log_sum_exp(&a) - log_sum_exp(&b)
                };
            }
        }
    }
    Ok(())
}

/// Exact bit LLRs for the QAM baseline.
pub fn qam_bit_llrs(y: Complex64, c: &QamConstellation, sigma2: f64) -> Result<Vec<f64>, Error> {
    let mut out = vec![0.0; c.bits_per_symbol()];
    bit_llrs_into(c.points(), y, sigma2, DemapKind::Exact, &mut out)?;
    Ok(out)
}
