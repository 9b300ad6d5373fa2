//! Learned modulator and demodulator: encoder/decoder networks, the power
//! normalization layer, the log-density feature map, GMI and BCE losses,
//! two-stage training and checkpoints.

mod checkpoint;
mod constellation;
mod loss;
mod net;
mod train;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub use checkpoint::{CheckpointMeta, ModelCheckpoint, CHECKPOINT_VERSION};
pub use constellation::{
    demodulate_logits, enumerate_constellation, feature_map, feature_matrix, label_inputs,
    llr_from_logit, llr_from_prob, metric_q, nn_demodulate, nn_modulate, power_normalize,
    Constellation, PROB_CLAMP,
};
pub use loss::{
    bce_from_probs, bce_loss, bce_loss_graph, gmi_loss, gmi_loss_graph, loss_grad_check, objective_graph, GraphOut,
    LossKind, NeuralModem, TrainBatch,
};
pub use net::{DecoderNet, Dense, EncoderNet, Mlp};
pub use train::{
    adapt_demodulator, evaluate, recalibrate_batch_norm, train_stage1, train_stage2, train_two_stage,
    validation_batch, BatchMode, EpochReport, OptimizerKind, StageConfig, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] crate::diffkit::Error),
    #[error("degenerate constellation: {0}")]
    Degenerate(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged in stage {stage} at step {step}: {detail}")]
    Diverged { stage: u8, step: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O: {0}")]
    Io(String),
}

/// Monte Carlo mean and standard error of the GMI summand with the genie
/// metric `q(c, y) = p(y | x(c))`:
/// `m + log₂ p(y|x) − log₂ Σ_x' p(y|x')`. Labels are drawn uniformly.
pub fn genie_gmi_estimate<R: Rng + ?Sized>(
    points: &[Complex64],
    sigma2: f64,
    n: usize,
    rng: &mut R,
) -> Result<(f64, f64), Error> {
    if !points.len().is_power_of_two() || points.len() < 2 || n < 2 || !(sigma2 > 0.0) {
        return Err(Error::Contract("genie estimate needs 2^m points, n >= 2, σ² > 0".into()));
    }
    let m = points.len().trailing_zeros() as f64;
    let s = (sigma2 / 2.0).sqrt();
    let k0 = -(PI * sigma2).ln();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut psi = vec![0.0; points.len()];
    for _ in 0..n {
        let label = rng.random_range(0..points.len());
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let y = points[label] + Complex64::new(s * re, s * im);
        for (v, x) in psi.iter_mut().zip(points) {
            *v = k0 - (y - x).norm_sqr() / sigma2;
        }
        let t = m + (psi[label] - crate::diffkit::log_sum_exp(&psi)) / std::f64::consts::LN_2;
        sum += t;
        sum_sq += t * t;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0) * n as f64 / (n - 1) as f64;
    Ok((mean, (var / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::label_to_bits;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Exact enumeration on a discrete channel with 4 inputs (2 bits) and
    /// 8 outputs: H(X) − Σ_i BCE_i with the true per-bit posteriors equals
    /// the bitwise GMI Σ_i I(C_i; Y).
    #[test]
    fn bce_gmi_identity_on_toy_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 2;
        let mut w = [[0.0f64; 8]; 4];
        for row in &mut w {
            let raw: Vec<f64> = (0..8).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for (v, r) in row.iter_mut().zip(raw) {
                *v = r / s;
            }
        }
        let px = 0.25;
        let py: Vec<f64> = (0..8).map(|y| (0..4).map(|x| px * w[x][y]).sum()).collect();

        // BCE_i = −E log₂ P(C_i = c_i | Y)
        let mut bce_sum = 0.0;
        for i in 0..m {
            let mut bce = 0.0;
            for x in 0..4 {
                let c = label_to_bits(x, m)[i];
                for y in 0..8 {
                    let p1: f64 = (0..4)
                        .filter(|&x2| label_to_bits(x2, m)[i] == 1)
                        .map(|x2| px * w[x2][y])
                        .sum::<f64>()
                        / py[y];
                    bce -= px * w[x][y] * metric_q(c, p1).log2();
                }
            }
            bce_sum += bce;
        }
        let lhs = m as f64 - bce_sum;

        // Σ_i I(C_i; Y) from the joint of (C_i, Y)
        let mut gmi = 0.0;
        for i in 0..m {
            for b in 0..2u8 {
                for y in 0..8 {
                    let joint: f64 = (0..4)
                        .filter(|&x| label_to_bits(x, m)[i] == b)
                        .map(|x| px * w[x][y])
                        .sum();
                    gmi += joint * (joint / (0.5 * py[y])).log2();
                }
            }
        }
        assert!((lhs - gmi).abs() < 1e-9, "{lhs} vs {gmi}");
        assert!(gmi > 0.0);
    }

    fn bi_awgn_mi(sigma2: f64) -> f64 {
        // I = 1 − E_{y|x=+1} log₂(1 + e^{−4y/σ²}), Simpson's rule on the real axis
        let s = (sigma2 / 2.0).sqrt();
        let f = |y: f64| {
            let dens = (-(y - 1.0).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            let l = -4.0 * y / sigma2;
            let soft = if l > 30.0 { l } else { l.exp().ln_1p() };
            dens * soft / std::f64::consts::LN_2
        };
        1.0 - simpson(1.0 - 14.0 * s, 1.0 + 14.0 * s, 20_000, f)
    }

    fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for k in 1..n {
            acc += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    #[test]
    fn genie_metric_recovers_mutual_information() {
        let pts = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
        let sigma2 = 1.0;
        let mi = bi_awgn_mi(sigma2);
        assert!(mi > 0.7 && mi < 0.8);

        // expectation of the summand by quadrature; the quadrature component
        // of the noise cancels in the ratio, so y is integrated on the real axis
        let s = (sigma2 / 2.0).sqrt();
        let summand = |y: f64, label: usize| {
            let psi: Vec<f64> = pts
                .iter()
                .map(|x| -(PI * sigma2).ln() - (y - x.re).powi(2) / sigma2)
                .collect();
            1.0 + (psi[label] - crate::diffkit::log_sum_exp(&psi)) / std::f64::consts::LN_2
        };
        let mut l = 0.0;
        for (label, x) in pts.iter().enumerate() {
            let dens = |y: f64| (-(y - x.re).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt());
            l += 0.5 * simpson(x.re - 14.0 * s, x.re + 14.0 * s, 20_000, |y| dens(y) * summand(y, label));
        }
        assert!((l - mi).abs() < 1e-3, "{l} vs {mi}");

        // the Monte Carlo estimator agrees within its own error
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mean, se) = genie_gmi_estimate(&pts, sigma2, 400_000, &mut rng).unwrap();
        assert!((mean - mi).abs() < 4.0 * se, "{mean} ± {se} vs {mi}");
        let (low, _) = genie_gmi_estimate(&pts, 1e4, 100_000, &mut rng).unwrap();
        assert!(low.abs() < 0.01);
    }
}
