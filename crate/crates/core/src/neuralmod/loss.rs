use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::constellation::{enumerate_constellation, label_inputs, Constellation};
use super::net::{DecoderNet, EncoderNet};
use super::Error;
use crate::diffkit::{BnMode, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Gmi,
    Bce,
}

/// Encoder and decoder trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModem {
    pub enc: EncoderNet,
    pub dec: DecoderNet,
}

/// Labels and the noise added to their symbols. Noise is a constant of the
/// graph; only the transmitted points depend on the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub labels: Vec<usize>,
    pub noise: Vec<Complex64>,
    pub sigma2: f64,
}

/// Handles into a recorded forward pass.
#[derive(Debug, Clone, Copy)]
pub struct GraphOut {
    /// Normalized constellation, `M × 2`.
    pub points: Var,
    /// Received symbols, `N × 2`.
    pub y: Var,
    /// Decoder logits, `N × m`.
    pub logits: Var,
    /// `ln q(c_i, y)` per bit, `N × m`.
    pub log_q: Var,
    /// `ln Σ_x' p(y | x')` per symbol, `N`.
    pub log_evidence: Var,
}

impl NeuralModem {
    pub fn new(enc: EncoderNet, dec: DecoderNet) -> Result<Self, Error> {
        if dec.input_width() != 1 << enc.bits_per_symbol()
            || dec.bits_per_symbol() != enc.bits_per_symbol()
        {
            return Err(Error::Contract(format!(
                "encoder for m={} does not fit decoder {}→{}",
                enc.bits_per_symbol(),
                dec.input_width(),
                dec.bits_per_symbol()
            )));
        }
        Ok(NeuralModem { enc, dec })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.enc.bits_per_symbol()
    }

    pub fn order(&self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.enc.net.params();
        p.extend(self.dec.net.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.enc.net.params_mut();
        p.extend(self.dec.net.params_mut());
        p
    }

    pub fn push_params(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|t| tape.param(t.clone())).collect()
    }

    pub fn constellation(&self) -> Result<Constellation, Error> {
        enumerate_constellation(&self.enc)
    }

    /// Records encoder → normalization → channel → feature map → decoder.
    ///
    /// The encoder always runs on the full label enumeration, so its batch
    /// statistics and the normalization statistics cover every point.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        vars: &[Var],
        batch: &TrainBatch,
        mode: BnMode,
    ) -> Result<GraphOut, Error> {
        let m = self.bits_per_symbol();
        let count = self.order();
        let n = batch.labels.len();
        if n == 0 {
            return Err(Error::Contract("empty batch".into()));
        }
        if batch.noise.len() != n {
            return Err(Error::Contract(format!(
                "{} noise samples for {n} labels",
                batch.noise.len()
            )));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&l| l >= count) {
            return Err(Error::Contract(format!("label {bad} out of range")));
        }
        if !(batch.sigma2 > 0.0) || !batch.sigma2.is_finite() {
            return Err(Error::Contract(format!("noise variance {}", batch.sigma2)));
        }
        let n_enc = self.enc.net.n_params();
        let (enc_vars, dec_vars) = vars.split_at(n_enc);

        let u = tape.constant(label_inputs(m));
        let raw = self.enc.net.forward(tape, u, enc_vars, mode)?;
        let eta = tape.col_mean(raw);
        let centered = tape.sub_row(raw, eta)?;
        let sq = tape.mul(centered, centered)?;
        let half_var = tape.mean(sq);
        let var = tape.scale(half_var, 2.0);
        let v = tape.value(var).item().unwrap_or(0.0);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Degenerate(format!("σ̃² = {v}")));
        }
        let sd = tape.sqrt(var);
        let points = tape.div_scalar(centered, sd)?;

        let x = tape.gather_rows(points, &batch.labels)?;
        let noise: Vec<f64> = batch.noise.iter().flat_map(|z| [z.re, z.im]).collect();
        let z = tape.constant(Tensor::matrix(n, 2, noise)?);
        let y = tape.add(x, z)?;

        let dist = tape.pairwise_sq_dist(y, points)?;
        let scaled = tape.scale(dist, -1.0 / batch.sigma2);
        let psi = tape.offset(scaled, -(PI * batch.sigma2).ln());
        let log_evidence = tape.log_sum_exp(psi)?;

        let logits = self.dec.net.forward(tape, psi, dec_vars, mode)?;
        // ln q = ln σ(z) for a 1 bit and ln σ(−z) for a 0 bit
        let signs: Vec<f64> = batch
            .labels
            .iter()
            .flat_map(|&l| (0..m).map(move |i| if l >> (m - 1 - i) & 1 == 1 { 1.0 } else { -1.0 }))
            .collect();
        let s = tape.constant(Tensor::matrix(n, m, signs)?);
        let signed = tape.mul(logits, s)?;
        let log_q = tape.log_sigmoid(signed);

        for (what, var) in [("log-evidence", log_evidence), ("bit metric", log_q)] {
            let t = tape.value(var);
            if let Some(i) = t.data().iter().position(|v| !v.is_finite()) {
                let cols = t.dims2().1;
                return Err(Error::NonFinite(format!(
                    "{what} of sample {}",
                    if t.shape().len() == 1 { i } else { i / cols }
                )));
            }
        }
        Ok(GraphOut {
            points,
            y,
            logits,
            log_q,
            log_evidence,
        })
    }
}

/// `m + (1/N) Σ_j [Σ_i log₂ q(c_ij, y_j) − log₂ Σ_x' p(y_j|x')]`, bits/symbol.
pub fn gmi_loss_graph(tape: &mut Tape, out: &GraphOut, m: usize) -> Result<Var, Error> {
    let n = tape.value(out.log_evidence).numel();
    let num = tape.sum(out.log_q);
    let den = tape.sum(out.log_evidence);
    let diff = tape.sub(num, den)?;
    let scaled = tape.scale(diff, 1.0 / (n as f64 * LN_2));
    Ok(tape.offset(scaled, m as f64))
}

/// Mean binary cross-entropy in bits per bit.
pub fn bce_loss_graph(tape: &mut Tape, out: &GraphOut) -> Result<Var, Error> {
    let mean = tape.mean(out.log_q);
    Ok(tape.scale(mean, -1.0 / LN_2))
}

/// The quantity minimized during training for `kind`.
pub fn objective_graph(tape: &mut Tape, out: &GraphOut, kind: LossKind, m: usize) -> Result<Var, Error> {
    match kind {
        LossKind::Gmi => {
            let l = gmi_loss_graph(tape, out, m)?;
            Ok(tape.scale(l, -1.0))
        }
        LossKind::Bce => bce_loss_graph(tape, out),
    }
}

/// GMI loss value (bits/symbol) of one batch with batch norm in `mode`.
pub fn gmi_loss(model: &NeuralModem, batch: &TrainBatch, mode: BnMode) -> Result<f64, Error> {
    let mut work = model.clone();
    let mut tape = Tape::new();
    let vars: Vec<Var> = work.params().into_iter().map(|t| tape.constant(t.clone())).collect();
    let out = work.forward(&mut tape, &vars, batch, mode)?;
    let l = gmi_loss_graph(&mut tape, &out, work.bits_per_symbol())?;
    Ok(tape.value(l).item().expect("scalar"))
}

/// BCE loss value (bits/bit) of one batch with batch norm in `mode`.
pub fn bce_loss(model: &NeuralModem, batch: &TrainBatch, mode: BnMode) -> Result<f64, Error> {
    let mut work = model.clone();
    let mut tape = Tape::new();
    let vars: Vec<Var> = work.params().into_iter().map(|t| tape.constant(t.clone())).collect();
    let out = work.forward(&mut tape, &vars, batch, mode)?;
    let l = bce_loss_graph(&mut tape, &out)?;
    Ok(tape.value(l).item().expect("scalar"))
}

/// Direct BCE of probabilities against bits (rows of `m`), bits per bit.
pub fn bce_from_probs(bits: &[u8], probs: &[f64]) -> Result<f64, Error> {
    if bits.len() != probs.len() || bits.is_empty() {
        return Err(Error::Contract(format!(
            "{} bits vs {} probabilities",
            bits.len(),
            probs.len()
        )));
    }
    let eps = super::PROB_CLAMP;
    let total: f64 = bits
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let p = p.clamp(eps, 1.0 - eps);
            if c == 1 {
                -p.log2()
            } else {
                -(1.0 - p).log2()
            }
        })
        .sum();
    Ok(total / bits.len() as f64)
}

/// Largest relative error between the analytic and finite-difference
/// gradients of the `kind` loss, for a small random model with `m` bits per
/// symbol on a random batch of 24 noisy symbols.
pub fn loss_grad_check(kind: LossKind, m: usize, seed: u64) -> Result<f64, Error> {
    use crate::rng::{rng_stream, Purpose};
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = rng_stream(seed, 0, Purpose::Init);
    let enc = EncoderNet::new(m, &[5, 4], &mut rng)?;
    let dec = DecoderNet::new(m, &[6], &mut rng)?;
    let model = NeuralModem::new(enc, dec)?;
    let sigma2 = 0.3;
    let s = (sigma2 / 2.0f64).sqrt();
    let mut rng = rng_stream(seed, 0, Purpose::Training);
    let batch = TrainBatch {
        labels: (0..24).map(|_| rng.random_range(0..1usize << m)).collect(),
        noise: (0..24)
            .map(|_| {
                Complex64::new(
                    s * rng.sample::<f64, _>(StandardNormal),
                    s * rng.sample::<f64, _>(StandardNormal),
                )
            })
            .collect(),
        sigma2,
    };
    let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let report = crate::diffkit::grad_check(
        |tape, vars| {
            let mut work = model.clone();
            let out = work
                .forward(tape, vars, &batch, BnMode::Train)
                .map_err(|e| crate::diffkit::Error::Contract(e.to_string()))?;
            match kind {
                LossKind::Gmi => gmi_loss_graph(tape, &out, m),
                LossKind::Bce => bce_loss_graph(tape, &out),
            }
            .map_err(|e| crate::diffkit::Error::Contract(e.to_string()))
        },
        &params,
        1e-6,
    )?;
    Ok(report.max_rel_error)
}
