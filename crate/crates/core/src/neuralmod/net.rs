use rand::Rng;

use super::Error;
use crate::diffkit::{Activation, BatchNormState, BnMode, Tape, Tensor, Var};

/// Fully connected layer, optionally followed by batch norm and an activation
/// (order: affine → batch norm → activation).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub bn: Option<BatchNormState>,
    pub act: Option<Activation>,
}

impl Dense {
    /// Uniform fan-in init: He bound for ReLU layers, Xavier bound otherwise.
    pub fn init<R: Rng + ?Sized>(
        d_in: usize,
        d_out: usize,
        act: Option<Activation>,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        let bound = match act {
            Some(Activation::Relu) => (6.0 / d_in as f64).sqrt(),
            _ => (6.0 / (d_in + d_out) as f64).sqrt(),
        };
        let w = (0..d_in * d_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Dense {
            w: Tensor::matrix(d_in, d_out, w).expect("sized above"),
            b: Tensor::zeros(&[d_out]),
            bn: batch_norm.then(|| BatchNormState::new(d_out)),
            act,
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.w.shape()[1]
    }

    fn n_params(&self) -> usize {
        if self.bn.is_some() {
            4
        } else {
            2
        }
    }
}

/// Stack of [`Dense`] layers. Parameters are ordered layer by layer as
/// `w, b[, gamma, beta]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.w);
            out.push(&l.b);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.b);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map_or(0, Dense::d_out)
    }

    /// Records the forward pass; `vars` are this network's parameter handles.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        x: Var,
        vars: &[Var],
        mode: BnMode,
    ) -> Result<Var, Error> {
        if vars.len() != self.n_params() {
            return Err(Error::Contract(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.n_params()
            )));
        }
        let mut h = x;
        let mut k = 0;
        for layer in &mut self.layers {
            h = tape.affine(h, vars[k], vars[k + 1])?;
            k += 2;
            if let Some(bn) = &mut layer.bn {
                h = tape.batch_norm(h, vars[k], vars[k + 1], bn, mode)?;
                k += 2;
            }
            if let Some(act) = layer.act {
                h = tape.activation(act, h)?;
            }
        }
        Ok(h)
    }

    /// Tape-free inference with batch norm on its running statistics.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, Error> {
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = h.matmul(&layer.w)?;
            let d = layer.d_out();
            let b = layer.b.data();
            let bn = layer.bn.as_ref().map(|bn| {
                let inv: Vec<f64> = bn
                    .running_var
                    .iter()
                    .map(|v| 1.0 / (v + bn.eps).sqrt())
                    .collect();
                (bn, inv)
            });
            for row in z.data_mut().chunks_exact_mut(d) {
                for j in 0..d {
                    let mut v = row[j] + b[j];
                    if let Some((bn, inv)) = &bn {
                        v = bn.gamma.data()[j] * ((v - bn.running_mean[j]) * inv[j])
                            + bn.beta.data()[j];
                    }
                    if let Some(act) = layer.act {
                        v = act.apply(v);
                    }
                    row[j] = v;
                }
            }
            h = z;
        }
        Ok(h)
    }
}

fn build<R: Rng + ?Sized>(
    widths: &[usize],
    first: Activation,
    rest: Activation,
    rng: &mut R,
) -> Mlp {
    let n = widths.len() - 1;
    let layers = (0..n)
        .map(|i| {
            let last = i + 1 == n;
            let act = if last {
                None
            } else if i == 0 {
                Some(first)
            } else {
                Some(rest)
            };
            Dense::init(widths[i], widths[i + 1], act, !last, rng)
        })
        .collect();
    Mlp { layers }
}

/// The modulator μ: `m` bits (as ±1) → tanh layer → ReLU layers → affine
/// layer with two outputs (real, imaginary) before power normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderNet {
    pub net: Mlp,
}

impl EncoderNet {
    pub fn new<R: Rng + ?Sized>(m: usize, hidden: &[usize], rng: &mut R) -> Result<Self, Error> {
        if m == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Contract(format!(
                "encoder needs m >= 1 and non-empty positive widths, got m={m} {hidden:?}"
            )));
        }
        let mut widths = vec![m];
        widths.extend_from_slice(hidden);
        widths.push(2);
        Ok(EncoderNet {
            net: build(&widths, Activation::Tanh, Activation::Relu, rng),
        })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.net.d_in()
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.net.layers[..self.net.layers.len() - 1]
            .iter()
            .map(Dense::d_out)
            .collect()
    }
}

/// The demodulator φ: feature vector of width `M` → ReLU layers → `m` logits.
/// Bit probabilities are the sigmoid of the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderNet {
    pub net: Mlp,
}

impl DecoderNet {
    pub fn new<R: Rng + ?Sized>(m: usize, hidden: &[usize], rng: &mut R) -> Result<Self, Error> {
        if m == 0 || m > 16 || hidden.contains(&0) {
            return Err(Error::Contract(format!(
                "decoder needs 1 <= m <= 16 and positive widths, got m={m} {hidden:?}"
            )));
        }
        let mut widths = vec![1 << m];
        widths.extend_from_slice(hidden);
        widths.push(m);
        Ok(DecoderNet {
            net: build(&widths, Activation::Relu, Activation::Relu, rng),
        })
    }

    pub fn input_width(&self) -> usize {
        self.net.d_in()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.net.d_out()
    }

    pub fn hidden(&self) -> Vec<usize> {
        self.net.layers[..self.net.layers.len() - 1]
            .iter()
            .map(Dense::d_out)
            .collect()
    }
}
