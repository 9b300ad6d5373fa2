use serde::{Deserialize, Serialize};

use super::tensor::{gemm, Tensor};
use super::Error;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without cancellation for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// Stable `ln Σ exp(x_k)`; `-inf` entries contribute nothing.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Learnable scale/shift plus running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormState {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(features: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Exponential moving average update with the (biased) batch statistics.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        let mo = self.momentum;
        for (r, &m) in self.running_mean.iter_mut().zip(mean) {
            *r = (1.0 - mo) * *r + mo * m;
        }
        for (r, &v) in self.running_var.iter_mut().zip(var) {
            *r = (1.0 - mo) * *r + mo * v;
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Var },
    Act { kind: Activation, x: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    LogSumExp { x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sum(Var),
    Mean(Var),
    Ln(Var),
    Sqrt(Var),
    LogSigmoid(Var),
    GatherRows { a: Var, idx: Vec<usize> },
    ColMean(Var),
    SubRow { a: Var, row: Var },
    DivScalar { a: Var, s: Var },
    PairwiseSqDist { y: Var, c: Var },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not affect the loss.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

/// Ordered record of primitive operations for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<(), Error> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, Error> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.shape().len() != 2 || wv.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "affine expects matrices, got x {:?} and W {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let (rows, d_in) = (xv.shape()[0], xv.shape()[1]);
        let (w_in, d_out) = (wv.shape()[0], wv.shape()[1]);
        if d_in != w_in {
            return Err(Error::Shape(format!(
                "affine: x has {d_in} columns but W has {w_in} rows"
            )));
        }
        if bv.numel() != d_out {
            return Err(Error::Shape(format!(
                "affine: W has {d_out} columns but b has {} entries",
                bv.numel()
            )));
        }
        let mut out = Vec::with_capacity(rows * d_out);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        gemm(rows, d_in, d_out, xv.data(), false, wv.data(), false, &mut out, true);
        let ng = self.ng(&[x, w, b]);
        Ok(self.push(
            Tensor::from_parts(vec![rows, d_out], out),
            Op::Affine { x, w, b },
            ng,
        ))
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Result<Var, Error> {
        let xv = self.value(x);
        if !xv.is_finite() {
            return Err(Error::NonFinite(format!("{kind:?} input")));
        }
        let out = xv.map(|v| kind.apply(v));
        let ng = self.ng(&[x]);
        Ok(self.push(out, Op::Act { kind, x }, ng))
    }

    /// Per-feature batch normalization of `x` (batch × features).
    ///
    /// In train mode the batch statistics are used and `state`'s running
    /// statistics are advanced; in infer mode only the running statistics are read.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        mode: BnMode,
    ) -> Result<Var, Error> {
        let xv = self.value(x);
        let (b, d) = xv.dims2();
        if xv.shape().len() != 2 || d != state.features() {
            return Err(Error::Shape(format!(
                "batch_norm: input {:?} for {} features",
                xv.shape(),
                state.features()
            )));
        }
        if self.value(gamma).numel() != d || self.value(beta).numel() != d {
            return Err(Error::Shape("batch_norm: gamma/beta width".into()));
        }
        let (mean, var) = match mode {
            BnMode::Train => {
                if b < 2 {
                    return Err(Error::Contract(format!(
                        "batch_norm in train mode needs at least 2 rows, got {b}"
                    )));
                }
                let (mean, var) = column_moments(xv);
                (mean, var)
            }
            BnMode::Infer => (state.running_mean.clone(), state.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + state.eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = Vec::with_capacity(b * d);
        let mut out = Vec::with_capacity(b * d);
        for row in xv.data().chunks_exact(d) {
            for j in 0..d {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(g[j] * h + bt[j]);
            }
        }
        if mode == BnMode::Train {
            state.update_running(&mean, &var);
        }
        let ng = self.ng(&[x, gamma, beta]);
        Ok(self.push(
            Tensor::from_parts(vec![b, d], out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train: mode == BnMode::Train,
            },
            ng,
        ))
    }

    /// Log-sum-exp over the last axis: `[rows × K] → [rows]`.
    pub fn log_sum_exp(&mut self, x: Var) -> Result<Var, Error> {
        let xv = self.value(x);
        let (rows, _) = xv.dims2();
        let out: Vec<f64> = (0..rows).map(|i| log_sum_exp(xv.row(i))).collect();
        let ng = self.ng(&[x]);
        Ok(self.push(Tensor::vector(out), Op::LogSumExp { x }, ng))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, Error> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(name, av, bv)?;
        Ok(Tensor::from_parts(
            av.shape().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, Error> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, Error> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, Error> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let ng = self.ng(&[a]);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        let ng = self.ng(&[a]);
        self.push(out, Op::Offset(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        let ng = self.ng(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        let ng = self.ng(&[a]);
        self.push(out, Op::Ln(a), ng)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::sqrt);
        let ng = self.ng(&[a]);
        self.push(out, Op::Sqrt(a), ng)
    }

    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(log_sigmoid);
        let ng = self.ng(&[a]);
        self.push(out, Op::LogSigmoid(a), ng)
    }

    /// Selects rows of a matrix; repeated indices are allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, Error> {
        let av = self.value(a);
        let (rows, cols) = av.dims2();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(Error::Shape(format!("gather_rows: index {i} out of {rows} rows")));
            }
            out.extend_from_slice(av.row(i));
        }
        if idx.is_empty() {
            return Err(Error::Shape("gather_rows: empty index list".into()));
        }
        let ng = self.ng(&[a]);
        Ok(self.push(
            Tensor::from_parts(vec![idx.len(), cols], out),
            Op::GatherRows {
                a,
                idx: idx.to_vec(),
            },
            ng,
        ))
    }

    /// Mean over rows: `[rows × cols] → [cols]`.
    pub fn col_mean(&mut self, a: Var) -> Var {
        let (mean, _) = column_moments(self.value(a));
        let ng = self.ng(&[a]);
        self.push(Tensor::vector(mean), Op::ColMean(a), ng)
    }

    /// `a - row`, broadcasting `row` over every row of `a`.
    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var, Error> {
        let (av, rv) = (self.value(a), self.value(row));
        let (_, cols) = av.dims2();
        if rv.numel() != cols {
            return Err(Error::Shape(format!(
                "sub_row: {} columns vs row of {}",
                cols,
                rv.numel()
            )));
        }
        let out: Vec<f64> = av
            .data()
            .chunks_exact(cols)
            .flat_map(|r| r.iter().zip(rv.data()).map(|(x, y)| x - y))
            .collect();
        let ng = self.ng(&[a, row]);
        Ok(self.push(
            Tensor::from_parts(av.shape().to_vec(), out),
            Op::SubRow { a, row },
            ng,
        ))
    }

    /// `a / s` for a scalar `s`.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var, Error> {
        let sv = self
            .value(s)
            .item()
            .ok_or_else(|| Error::Shape("div_scalar: divisor is not a scalar".into()))?;
        let out = self.value(a).map(|v| v / sv);
        let ng = self.ng(&[a, s]);
        Ok(self.push(out, Op::DivScalar { a, s }, ng))
    }

    /// Squared Euclidean distances between the rows of `y` (`N×D`) and `c` (`K×D`).
    pub fn pairwise_sq_dist(&mut self, y: Var, c: Var) -> Result<Var, Error> {
        let (yv, cv) = (self.value(y), self.value(c));
        let (n, d) = yv.dims2();
        let (k, dc) = cv.dims2();
        if d != dc {
            return Err(Error::Shape(format!(
                "pairwise_sq_dist: {d} vs {dc} coordinates"
            )));
        }
        let mut out = Vec::with_capacity(n * k);
        for yr in yv.data().chunks_exact(d) {
            for cr in cv.data().chunks_exact(d) {
                out.push(yr.iter().zip(cr).map(|(a, b)| (a - b) * (a - b)).sum());
            }
        }
        let ng = self.ng(&[y, c]);
        Ok(self.push(
            Tensor::from_parts(vec![n, k], out),
            Op::PairwiseSqDist { y, c },
            ng,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, Error> {
        if self.nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::from_parts(lv.shape().to_vec(), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
        }
        for (i, n) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if !matches!(n.op, Op::Leaf) || !n.needs_grad {
                grads[i] = None;
            }
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, d_in) = xv.dims2();
                let d_out = wv.shape()[1];
                if needs(*x) {
                    let mut gx = vec![0.0; rows * d_in];
                    gemm(rows, d_out, d_in, gd, false, wv.data(), true, &mut gx, false);
                    acc(*x, Tensor::from_parts(xv.shape().to_vec(), gx));
                }
                if needs(*w) {
                    let mut gw = vec![0.0; d_in * d_out];
                    gemm(d_in, rows, d_out, xv.data(), true, gd, false, &mut gw, false);
                    acc(*w, Tensor::from_parts(wv.shape().to_vec(), gw));
                }
                if needs(*b) {
                    let mut gb = vec![0.0; d_out];
                    for r in gd.chunks_exact(d_out) {
                        for (s, v) in gb.iter_mut().zip(r) {
                            *s += v;
                        }
                    }
                    acc(*b, Tensor::from_parts(self.value(*b).shape().to_vec(), gb));
                }
            }
            Op::Act { kind, x } => {
                let xv = self.value(*x);
                let out: Vec<f64> = xv
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .zip(gd)
                    .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                    .collect();
                acc(*x, Tensor::from_parts(xv.shape().to_vec(), out));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let (b, d) = node.value.dims2();
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; d];
                let mut sum_gx = vec![0.0; d];
                for (gr, hr) in gd.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                    for j in 0..d {
                        sum_g[j] += gr[j];
                        sum_gx[j] += gr[j] * hr[j];
                    }
                }
                if needs(*x) {
                    let bf = b as f64;
                    let mut gx = Vec::with_capacity(b * d);
                    for (gr, hr) in gd.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            let v = if *train {
                                gam[j] * inv_std[j] / bf
                                    * (bf * gr[j] - sum_g[j] - hr[j] * sum_gx[j])
                            } else {
                                gam[j] * inv_std[j] * gr[j]
                            };
                            gx.push(v);
                        }
                    }
                    acc(*x, Tensor::from_parts(vec![b, d], gx));
                }
                let gshape = self.value(*gamma).shape().to_vec();
                acc(*gamma, Tensor::from_parts(gshape.clone(), sum_gx));
                acc(*beta, Tensor::from_parts(gshape, sum_g));
            }
            Op::LogSumExp { x } => {
                let xv = self.value(*x);
                let (rows, k) = xv.dims2();
                let mut out = Vec::with_capacity(rows * k);
                for i in 0..rows {
                    let lse = node.value.data()[i];
                    for &xi in xv.row(i) {
                        let p = if lse == f64::NEG_INFINITY {
                            0.0
                        } else {
                            (xi - lse).exp()
                        };
                        out.push(gd[i] * p);
                    }
                }
                acc(*x, Tensor::from_parts(xv.shape().to_vec(), out));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    let t = gd.iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::from_parts(av.shape().to_vec(), t));
                }
                if needs(*b) {
                    let t = gd.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    acc(*b, Tensor::from_parts(bv.shape().to_vec(), t));
                }
            }
            Op::Scale(a, c) => acc(*a, g.map(|v| v * c)),
            Op::Offset(a) => acc(*a, g.clone()),
            Op::Sum(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::full(av.shape(), gd[0]));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::full(av.shape(), gd[0] / av.numel() as f64));
            }
            Op::Ln(a) => {
                let av = self.value(*a);
                let t = gd.iter().zip(av.data()).map(|(gi, x)| gi / x).collect();
                acc(*a, Tensor::from_parts(av.shape().to_vec(), t));
            }
            Op::Sqrt(a) => {
                let t = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, y)| gi / (2.0 * y))
                    .collect();
                acc(*a, Tensor::from_parts(node.value.shape().to_vec(), t));
            }
            Op::LogSigmoid(a) => {
                let av = self.value(*a);
                let t = gd
                    .iter()
                    .zip(av.data())
                    .map(|(gi, &x)| gi * sigmoid(-x))
                    .collect();
                acc(*a, Tensor::from_parts(av.shape().to_vec(), t));
            }
            Op::GatherRows { a, idx } => {
                let av = self.value(*a);
                let (_, cols) = av.dims2();
                let mut out = vec![0.0; av.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        out[i * cols + c] += gd[r * cols + c];
                    }
                }
                acc(*a, Tensor::from_parts(av.shape().to_vec(), out));
            }
            Op::ColMean(a) => {
                let av = self.value(*a);
                let (rows, cols) = av.dims2();
                let mut out = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    out.extend(gd.iter().map(|v| v / rows as f64));
                }
                acc(*a, Tensor::from_parts(av.shape().to_vec(), out));
            }
            Op::SubRow { a, row } => {
                acc(*a, g.clone());
                if needs(*row) {
                    let rv = self.value(*row);
                    let cols = rv.numel();
                    let mut out = vec![0.0; cols];
                    for r in gd.chunks_exact(cols) {
                        for (o, v) in out.iter_mut().zip(r) {
                            *o -= v;
                        }
                    }
                    acc(*row, Tensor::from_parts(rv.shape().to_vec(), out));
                }
            }
            Op::DivScalar { a, s } => {
                let sv = self.value(*s).data()[0];
                acc(*a, g.map(|v| v / sv));
                if needs(*s) {
                    let av = self.value(*a);
                    let dot: f64 = gd.iter().zip(av.data()).map(|(x, y)| x * y).sum();
                    acc(
                        *s,
                        Tensor::from_parts(
                            self.value(*s).shape().to_vec(),
                            vec![-dot / (sv * sv)],
                        ),
                    );
                }
            }
            Op::PairwiseSqDist { y, c } => {
                let (yv, cv) = (self.value(*y), self.value(*c));
                let (n, d) = yv.dims2();
                let (k, _) = cv.dims2();
                let mut gy = vec![0.0; n * d];
                let mut gc = vec![0.0; k * d];
                for j in 0..n {
                    let yr = yv.row(j);
                    for q in 0..k {
                        let w = 2.0 * gd[j * k + q];
                        if w == 0.0 {
                            continue;
                        }
                        let cr = cv.row(q);
                        for t in 0..d {
                            let diff = w * (yr[t] - cr[t]);
                            gy[j * d + t] += diff;
                            gc[q * d + t] -= diff;
                        }
                    }
                }
                acc(*y, Tensor::from_parts(yv.shape().to_vec(), gy));
                acc(*c, Tensor::from_parts(cv.shape().to_vec(), gc));
            }
        }
    }
}

/// Per-column mean and biased variance.
pub(crate) fn column_moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = x.dims2();
    let mut mean = vec![0.0; cols];
    for r in x.data().chunks_exact(cols) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; cols];
    for r in x.data().chunks_exact(cols) {
        for j in 0..cols {
            let d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= rows as f64);
    (mean, var)
}
