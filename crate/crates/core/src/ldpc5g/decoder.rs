use super::{Error, ParityCheckMatrix};

/// Messages are clipped to this magnitude so `tanh(x/2)` never rounds to ±1.
pub const LLR_CLIP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaConfig {
    pub max_iter: usize,
    /// Stop as soon as the hard decision satisfies every check.
    pub early_exit: bool,
}

impl Default for SpaConfig {
    fn default() -> Self {
        SpaConfig {
            max_iter: 50,
            early_exit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
}

/// Flooding-schedule sum-product decoder with the exact tanh check rule.
///
/// The Tanner graph is flattened once into edge arrays; every call to
/// [`SpaDecoder::decode`] allocates its own message buffers.
#[derive(Debug, Clone)]
pub struct SpaDecoder {
    n_vars: usize,
    check_ptr: Vec<usize>,
    edge_var: Vec<u32>,
    var_ptr: Vec<usize>,
    var_edges: Vec<u32>,
    config: SpaConfig,
}

impl SpaDecoder {
    pub fn new(h: &ParityCheckMatrix, config: SpaConfig) -> Self {
        let mut check_ptr = Vec::with_capacity(h.n_rows() + 1);
        let mut edge_var = Vec::with_capacity(h.nnz());
        check_ptr.push(0);
        for i in 0..h.n_rows() {
            edge_var.extend_from_slice(h.row(i));
            check_ptr.push(edge_var.len());
        }
        let n_vars = h.n_cols();
        let mut degree = vec![0usize; n_vars];
        for &v in &edge_var {
            degree[v as usize] += 1;
        }
        let mut var_ptr = Vec::with_capacity(n_vars + 1);
        var_ptr.push(0);
        for d in &degree {
            var_ptr.push(var_ptr.last().unwrap() + d);
        }
        let mut fill = var_ptr.clone();
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        SpaDecoder {
            n_vars,
            check_ptr,
            edge_var,
            var_ptr,
            var_edges,
            config,
        }
    }

    pub fn config(&self) -> SpaConfig {
        self.config
    }

    fn syndrome_ok(&self, hard: &[u8]) -> bool {
        self.check_ptr.windows(2).all(|w| {
            self.edge_var[w[0]..w[1]]
                .iter()
                .fold(0u8, |a, &v| a ^ hard[v as usize])
                == 0
        })
    }

    /// Decodes channel LLRs (`ln P(0)/P(1)`, positive favours 0).
    pub fn decode(&self, llrs: &[f64]) -> Result<DecodeOutcome, Error> {
        if llrs.len() != self.n_vars {
            return Err(Error::Length {
                expected: self.n_vars,
                got: llrs.len(),
            });
        }
        if let Some(i) = llrs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("LLR {i} is not finite")));
        }
        let n_edges = self.edge_var.len();
        let mut v2c: Vec<f64> = self.edge_var.iter().map(|&v| llrs[v as usize]).collect();
        let mut c2v = vec![0.0; n_edges];
        let mut hard = vec![0u8; self.n_vars];
        let mut scratch = Vec::new();

        for iter in 1..=self.config.max_iter {
            for w in self.check_ptr.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                scratch.clear();
                scratch.extend(
                    v2c[lo..hi]
                        .iter()
                        .map(|&m| (0.5 * m.clamp(-LLR_CLIP, LLR_CLIP)).tanh()),
                );
                // exclusive products via prefix and suffix sweeps
                let mut prefix = 1.0;
                for (k, &t) in scratch.iter().enumerate() {
                    c2v[lo + k] = prefix;
                    prefix *= t;
                }
                let mut suffix = 1.0;
                for (k, &t) in scratch.iter().enumerate().rev() {
                    let p = c2v[lo + k] * suffix;
                    suffix *= t;
                    c2v[lo + k] = ((1.0 + p) / (1.0 - p)).ln().clamp(-LLR_CLIP, LLR_CLIP);
                }
            }
            for v in 0..self.n_vars {
                let edges = &self.var_edges[self.var_ptr[v]..self.var_ptr[v + 1]];
                let total = llrs[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
                hard[v] = u8::from(total < 0.0);
                for &e in edges {
                    v2c[e as usize] = total - c2v[e as usize];
                }
            }
            let ok = self.syndrome_ok(&hard);
            if ok && self.config.early_exit {
                return Ok(DecodeOutcome {
                    bits: hard,
                    converged: true,
                    iterations: iter,
                });
            }
            if iter == self.config.max_iter {
                return Ok(DecodeOutcome {
                    bits: hard,
                    converged: ok,
                    iterations: iter,
                });
            }
        }
        // max_iter == 0: hard decision on the channel values only
        for (h, &l) in hard.iter_mut().zip(llrs) {
            *h = u8::from(l < 0.0);
        }
        Ok(DecodeOutcome {
            converged: self.syndrome_ok(&hard),
            bits: hard,
            iterations: 0,
        })
    }
}

pub fn spa_decode(
    h: &ParityCheckMatrix,
    llrs: &[f64],
    max_iter: usize,
) -> Result<DecodeOutcome, Error> {
    SpaDecoder::new(
        h,
        SpaConfig {
            max_iter,
            early_exit: true,
        },
    )
    .decode(llrs)
}
