use serde::{Deserialize, Serialize};

use super::{Error, Tensor};

/// Adam hyperparameters. A nonzero `weight_decay` turns the step into AdamW
/// (decoupled decay `w ← w − lr·λ·w`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators for a fixed, ordered list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub hyper: AdamParams,
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, hyper: AdamParams) -> Self {
        let first: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.numel()]).collect();
        let second = first.clone();
        OptimizerState {
            hyper,
            t: 0,
            first,
            second,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.hyper.lr = lr;
    }

    /// One bias-corrected Adam step, with decoupled weight decay when
    /// `hyper.weight_decay > 0`. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), Error> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.first[i].len() || g.numel() != p.numel() {
                return Err(Error::Shape(format!(
                    "parameter {i}: state {} / param {} / grad {} entries",
                    self.first[i].len(),
                    p.numel(),
                    g.numel()
                )));
            }
            if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} at entry {j}; step rejected"
                )));
            }
        }
        if self.hyper.weight_decay < 0.0 {
            return Err(Error::Contract("weight decay must be non-negative".into()));
        }
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                if weight_decay > 0.0 {
                    *w -= lr * weight_decay * *w;
                }
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain Adam step (weight decay ignored).
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [&mut Tensor],
    grads: &[Tensor],
) -> Result<(), Error> {
    let saved = state.hyper.weight_decay;
    state.hyper.weight_decay = 0.0;
    let r = state.step(params, grads);
    state.hyper.weight_decay = saved;
    r
}

/// AdamW step with decay coefficient `lambda`.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    lambda: f64,
) -> Result<(), Error> {
    if lambda < 0.0 {
        return Err(Error::Contract(format!("weight decay {lambda} < 0")));
    }
    let saved = state.hyper.weight_decay;
    state.hyper.weight_decay = lambda;
    let r = state.step(params, grads);
    state.hyper.weight_decay = saved;
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrShape {
    /// Two ×√(min/max) drops at 50% and 75% of the run (×0.1 each for 0.1→0.001).
    #[default]
    Step,
    Linear,
    Cosine,
    /// Driven by the caller: ×0.1 whenever validation stalls, down to the
    /// minimum. [`LrSchedule::at`] returns the maximum.
    Plateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    #[serde(default)]
    pub shape: LrShape,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            lr_max: 0.1,
            lr_min: 0.001,
            shape: LrShape::Step,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, step: usize, total_steps: usize) -> Result<f64, Error> {
        if self.lr_min > self.lr_max {
            return Err(Error::Contract(format!(
                "lr_min {} exceeds lr_max {}",
                self.lr_min, self.lr_max
            )));
        }
        if step > total_steps {
            return Err(Error::Contract(format!(
                "step {step} beyond total {total_steps}"
            )));
        }
        let frac = if total_steps == 0 {
            0.0
        } else {
            step as f64 / total_steps as f64
        };
        let (hi, lo) = (self.lr_max, self.lr_min);
        Ok(match self.shape {
            LrShape::Step => {
                let drop = (lo / hi).sqrt();
                if frac < 0.5 {
                    hi
                } else if frac < 0.75 {
                    hi * drop
                } else {
                    lo
                }
            }
            LrShape::Linear => hi + (lo - hi) * frac,
            LrShape::Cosine => lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * frac).cos()),
            LrShape::Plateau => hi,
        })
    }
}

pub fn lr_schedule(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> Result<f64, Error> {
    LrSchedule {
        lr_max,
        lr_min,
        shape: LrShape::Step,
    }
    .at(step, total_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor {
        Tensor::scalar(v)
    }

    #[test]
    fn first_adam_step_is_minus_lr() {
        let mut w = one(0.5);
        let hyper = AdamParams {
            lr: 0.1,
            ..Default::default()
        };
        let mut st = OptimizerState::new([&w], hyper);
        adam_step(&mut st, &mut [&mut w], &[one(1.0)]).unwrap();
        assert!((w.data()[0] - 0.4).abs() < 1e-8);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut w = Tensor::vector(vec![1.0, -2.0, 3.5]);
        let mut st = OptimizerState::new([&w], AdamParams::default());
        adam_step(&mut st, &mut [&mut w], &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(w.data(), &[1.0, -2.0, 3.5]);
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let mut a = one(1.0);
        let mut b = one(1.0);
        let mut st = OptimizerState::new([&a, &b], AdamParams::default());
        for _ in 0..5 {
            adam_step(&mut st, &mut [&mut a, &mut b], &[one(0.3), one(0.3)]).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn adamw_decay_only() {
        let mut w = one(1.0);
        let hyper = AdamParams {
            lr: 0.1,
            ..Default::default()
        };
        let mut st = OptimizerState::new([&w], hyper);
        adamw_step(&mut st, &mut [&mut w], &[one(0.0)], 0.01).unwrap();
        assert!((w.data()[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn adamw_with_zero_lambda_matches_adam() {
        let hyper = AdamParams {
            lr: 0.05,
            ..Default::default()
        };
        let mut a = Tensor::vector(vec![0.3, -1.2]);
        let mut b = a.clone();
        let mut sa = OptimizerState::new([&a], hyper);
        let mut sb = OptimizerState::new([&b], hyper);
        for k in 0..4 {
            let g = Tensor::vector(vec![0.1 * k as f64, -0.7]);
            adam_step(&mut sa, &mut [&mut a], std::slice::from_ref(&g)).unwrap();
            adamw_step(&mut sb, &mut [&mut b], &[g], 0.0).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn adamw_accepts_large_decay() {
        let mut w = one(2.0);
        let hyper = AdamParams {
            lr: 0.1,
            ..Default::default()
        };
        let mut st = OptimizerState::new([&w], hyper);
        adamw_step(&mut st, &mut [&mut w], &[one(0.0)], 0.2).unwrap();
        assert!((w.data()[0] - 2.0 * (1.0 - 0.02)).abs() < 1e-15);
        assert!(adamw_step(&mut st, &mut [&mut w], &[one(0.0)], -0.1).is_err());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut w = one(1.0);
        let mut st = OptimizerState::new([&w], AdamParams::default());
        let err = adam_step(&mut st, &mut [&mut w], &[one(f64::NAN)]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(w.data()[0], 1.0);
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn step_schedule_values() {
        assert_eq!(lr_schedule(0, 100, 0.1, 0.001).unwrap(), 0.1);
        assert!((lr_schedule(60, 100, 0.1, 0.001).unwrap() - 0.01).abs() < 1e-15);
        assert!((lr_schedule(100, 100, 0.1, 0.001).unwrap() - 0.001).abs() < 1e-15);
        assert!(lr_schedule(0, 100, 0.001, 0.1).is_err());
        assert!(lr_schedule(101, 100, 0.1, 0.001).is_err());
    }

    #[test]
    fn schedules_monotone() {
        for shape in [LrShape::Step, LrShape::Linear, LrShape::Cosine] {
            let s = LrSchedule {
                shape,
                ..Default::default()
            };
            let total = 97;
            let lrs: Vec<f64> = (0..=total).map(|k| s.at(k, total).unwrap()).collect();
            assert!((lrs[0] - 0.1).abs() < 1e-15, "{shape:?}");
            assert!((lrs[total] - 0.001).abs() < 1e-12, "{shape:?}");
            assert!(lrs.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{shape:?}");
        }
    }
}
