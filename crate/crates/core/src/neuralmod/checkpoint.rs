use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::constellation::{enumerate_constellation, Constellation};
use super::loss::{LossKind, NeuralModem};
use super::net::{DecoderNet, Mlp};
use super::train::TrainConfig;
use super::Error;
use crate::diffkit::Tensor;
use crate::rng::{rng_stream, Purpose};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub stage: u8,
    pub loss_kind: LossKind,
    pub train_snr_db: f64,
    /// Validation objective of the saved model (GMI in bits/symbol or BCE in bits/bit).
    pub final_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<TrainConfig>,
}

/// Trained model with its frozen constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: NeuralModem,
    pub constellation: Constellation,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Arch {
    enc_hidden: Vec<usize>,
    dec_hidden: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Weight {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Bn {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    run_mean: Vec<f64>,
    run_var: Vec<f64>,
    momentum: f64,
    eps: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Norm {
    eta_re: f64,
    eta_im: f64,
    sigma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Point {
    label: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    version: u32,
    #[serde(rename = "M")]
    order: usize,
    arch: Arch,
    weights: BTreeMap<String, Weight>,
    bn: BTreeMap<String, Bn>,
    norm: Norm,
    constellation: Vec<Point>,
    meta: CheckpointMeta,
}

fn export(prefix: &str, net: &Mlp, weights: &mut BTreeMap<String, Weight>, bn: &mut BTreeMap<String, Bn>) {
    for (i, l) in net.layers.iter().enumerate() {
        for (suffix, t) in [("w", &l.w), ("b", &l.b)] {
            weights.insert(
                format!("{prefix}.{i}.{suffix}"),
                Weight {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                },
            );
        }
        if let Some(s) = &l.bn {
            bn.insert(
                format!("{prefix}.{i}"),
                Bn {
                    gamma: s.gamma.data().to_vec(),
                    beta: s.beta.data().to_vec(),
                    run_mean: s.running_mean.clone(),
                    run_var: s.running_var.clone(),
                    momentum: s.momentum,
                    eps: s.eps,
                },
            );
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn finite(name: &str, xs: &[f64]) -> Result<(), Error> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(bad(format!("{name} holds a non-finite value")));
    }
    Ok(())
}

fn fill(
    prefix: &str,
    net: &mut Mlp,
    weights: &mut BTreeMap<String, Weight>,
    bn: &mut BTreeMap<String, Bn>,
) -> Result<(), Error> {
    for (i, l) in net.layers.iter_mut().enumerate() {
        for (suffix, t) in [("w", &mut l.w), ("b", &mut l.b)] {
            let key = format!("{prefix}.{i}.{suffix}");
            let w = weights.remove(&key).ok_or_else(|| bad(format!("missing weight {key}")))?;
            if w.shape != t.shape() {
                return Err(bad(format!("{key}: shape {:?}, expected {:?}", w.shape, t.shape())));
            }
            finite(&key, &w.data)?;
            *t = Tensor::new(w.shape, w.data).map_err(|e| bad(format!("{key}: {e}")))?;
        }
        let key = format!("{prefix}.{i}");
        match (&mut l.bn, bn.remove(&key)) {
            (Some(s), Some(b)) => {
                let d = s.features();
                for (name, v) in [
                    ("gamma", &b.gamma),
                    ("beta", &b.beta),
                    ("run_mean", &b.run_mean),
                    ("run_var", &b.run_var),
                ] {
                    if v.len() != d {
                        return Err(bad(format!("{key}.{name}: {} values, expected {d}", v.len())));
                    }
                    finite(&format!("{key}.{name}"), v)?;
                }
                if b.run_var.iter().any(|&v| v < 0.0) || !(b.eps > 0.0) || !(0.0..=1.0).contains(&b.momentum) {
                    return Err(bad(format!("{key}: invalid batch-norm statistics")));
                }
                s.gamma = Tensor::vector(b.gamma);
                s.beta = Tensor::vector(b.beta);
                s.running_mean = b.run_mean;
                s.running_var = b.run_var;
                s.momentum = b.momentum;
                s.eps = b.eps;
            }
            (None, None) => {}
            (Some(_), None) => return Err(bad(format!("missing batch norm {key}"))),
            (None, Some(_)) => return Err(bad(format!("unexpected batch norm {key}"))),
        }
    }
    Ok(())
}

impl ModelCheckpoint {
    /// Freezes the model's current constellation.
    pub fn new(model: NeuralModem, meta: CheckpointMeta) -> Result<Self, Error> {
        let constellation = enumerate_constellation(&model.enc)?;
        constellation.validate(1e-9)?;
        Ok(ModelCheckpoint {
            model,
            constellation,
            meta,
        })
    }

    pub fn order(&self) -> usize {
        self.model.order()
    }

    pub fn to_json(&self) -> Result<String, Error> {
        let mut weights = BTreeMap::new();
        let mut bn = BTreeMap::new();
        export("enc", &self.model.enc.net, &mut weights, &mut bn);
        export("dec", &self.model.dec.net, &mut weights, &mut bn);
        let c = &self.constellation;
        let doc = Document {
            version: CHECKPOINT_VERSION,
            order: self.order(),
            arch: Arch {
                enc_hidden: self.model.enc.hidden(),
                dec_hidden: self.model.dec.hidden(),
            },
            weights,
            bn,
            norm: Norm {
                eta_re: c.eta().re,
                eta_im: c.eta().im,
                sigma: c.sigma2().sqrt(),
            },
            constellation: c
                .points()
                .iter()
                .enumerate()
                .map(|(label, p)| Point {
                    label,
                    re: p.re,
                    im: p.im,
                })
                .collect(),
            meta: self.meta.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| bad(e.to_string()))
    }

    /// Parses and re-validates a checkpoint: architecture, finite weights,
    /// and that the stored constellation and statistics match the encoder.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let mut doc: Document =
            serde_json::from_str(text).map_err(|e| bad(format!("malformed checkpoint: {e}")))?;
        if doc.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "format version {} (expected {CHECKPOINT_VERSION})",
                doc.version
            )));
        }
        if doc.order < 2 || !doc.order.is_power_of_two() || doc.order > 1 << 12 {
            return Err(bad(format!("M = {}", doc.order)));
        }
        let m = doc.order.trailing_zeros() as usize;
        // shapes come from the architecture; values are overwritten below
        let mut rng = rng_stream(0, 0, Purpose::Init);
        let mut enc = super::net::EncoderNet::new(m, &doc.arch.enc_hidden, &mut rng)?;
        let mut dec = DecoderNet::new(m, &doc.arch.dec_hidden, &mut rng)?;
        fill("enc", &mut enc.net, &mut doc.weights, &mut doc.bn)?;
        fill("dec", &mut dec.net, &mut doc.weights, &mut doc.bn)?;
        if let Some(k) = doc.weights.keys().chain(doc.bn.keys()).next() {
            return Err(bad(format!("unexpected entry {k}")));
        }
        let model = NeuralModem::new(enc, dec)?;

        if doc.constellation.len() != doc.order {
            return Err(bad(format!(
                "{} constellation points for M = {}",
                doc.constellation.len(),
                doc.order
            )));
        }
        let mut points = vec![Complex64::new(f64::NAN, f64::NAN); doc.order];
        for p in &doc.constellation {
            let slot = points
                .get_mut(p.label)
                .ok_or_else(|| bad(format!("label {} out of range", p.label)))?;
            if !slot.re.is_nan() {
                return Err(bad(format!("label {} repeated", p.label)));
            }
            *slot = Complex64::new(p.re, p.im);
        }
        let n = &doc.norm;
        if !(n.sigma > 0.0) || !n.sigma.is_finite() {
            return Err(bad(format!("normalization sigma {}", n.sigma)));
        }
        let stored = Constellation::from_parts(
            points,
            Complex64::new(n.eta_re, n.eta_im),
            n.sigma * n.sigma,
        )
        .map_err(|e| bad(format!("stored constellation: {e}")))?;

        let fresh = enumerate_constellation(&model.enc)?;
        let tol = 1e-12;
        if (fresh.eta() - stored.eta()).norm() > tol * (1.0 + fresh.eta().norm())
            || (fresh.sigma2() - stored.sigma2()).abs() > tol * fresh.sigma2()
        {
            return Err(bad("normalization statistics do not match the encoder"));
        }
        if fresh
            .points()
            .iter()
            .zip(stored.points())
            .any(|(a, b)| (a - b).norm() > tol)
        {
            return Err(bad("constellation snapshot does not match the encoder"));
        }
        if let Some(cfg) = &doc.meta.config {
            if cfg.order != doc.order {
                return Err(bad("metadata configuration is for a different M"));
            }
        }
        Ok(ModelCheckpoint {
            model,
            constellation: stored,
            meta: doc.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
