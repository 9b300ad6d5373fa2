use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::link::System;
use super::Error;
use crate::diffkit::log_sum_exp;
use crate::modem::awgn_in_place;
use crate::rng::{rng_stream, Purpose};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmiEstimate {
    pub snr_db: f64,
    pub symbols: u64,
    /// Mean of `m + Σ_i log₂ q_i − log₂ Σ_x' p(y|x')`.
    pub gmi: Estimate,
    /// `H(X) − Σ_i BCE_i = m + E Σ_i log₂ q_i` on the same sample.
    pub bce_bound: Estimate,
    /// `E[−log₂ Σ_x' p(y|x')]`, the per-sample difference of the two.
    pub evidence_term: Estimate,
}

#[derive(Default)]
struct Moments {
    n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_err: (var / n).sqrt(),
        }
    }
}

const CHUNK: u64 = 4096;

/// Sample-mean GMI estimate at `snr_db` with the system's own bit metric:
/// the learned demodulator's probabilities, or the exact Gaussian bit
/// posteriors for QAM.
pub fn estimate_gmi(system: &System, snr_db: f64, symbols: u64, seed: u64) -> Result<GmiEstimate, Error> {
    if symbols < 2 || !snr_db.is_finite() {
        return Err(Error::Contract("need at least 2 symbols and a finite SNR".into()));
    }
    let order = system.order();
    let m = system.bits_per_symbol();
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let k0 = -(PI * sigma2).ln();
    let system = system.at_noise(sigma2)?;
    let points = system.points().to_vec();
    let (mut g, mut b, mut e) = (Moments::default(), Moments::default(), Moments::default());
    let mut done = 0;
    let mut chunk = 0;
    let mut psi = vec![0.0; order];
    while done < symbols {
        let n = CHUNK.min(symbols - done) as usize;
        let mut rng = rng_stream(seed, chunk, Purpose::Gmi);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..order)).collect();
        let mut ys: Vec<Complex64> = labels.iter().map(|&l| points[l]).collect();
        awgn_in_place(&mut ys, sigma2, &mut rng)?;
        let mut llrs = vec![0.0; n * m];
        system.llrs(&ys, sigma2, &mut llrs)?;
        for ((&label, y), l) in labels.iter().zip(&ys).zip(llrs.chunks_exact(m)) {
            // log₂ q_i = −log₂(1 + e^{∓ℓ}) with the sign set by the sent bit
            let mut log_q = 0.0;
            for (i, &li) in l.iter().enumerate() {
                let bit = label >> (m - 1 - i) & 1;
                let s = if bit == 0 { li } else { -li };
                log_q += -(if s > 0.0 { (-s).exp().ln_1p() } else { -s + s.exp().ln_1p() }) / LN_2;
            }
            for (v, x) in psi.iter_mut().zip(&points) {
                *v = k0 - (y - x).norm_sqr() / sigma2;
            }
            let ev = -log_sum_exp(&psi) / LN_2;
            g.push(m as f64 + log_q + ev);
            b.push(m as f64 + log_q);
            e.push(ev);
        }
        done += n as u64;
        chunk += 1;
    }
    Ok(GmiEstimate {
        snr_db,
        symbols,
        gmi: g.estimate(),
        bce_bound: b.estimate(),
        evidence_term: e.estimate(),
    })
}
