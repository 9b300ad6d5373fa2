//! Small reverse-mode automatic differentiation engine over dense `f64`
//! tensors, with the Adam/AdamW optimizers, learning-rate schedules and a
//! finite-difference gradient checker used by the training loop.

mod check;
mod optim;
mod tape;
mod tensor;

pub use check::{grad_check, GradCheckReport};
pub use optim::{adam_step, adamw_step, lr_schedule, AdamParams, LrSchedule, LrShape, OptimizerState};
pub use tape::{
    log_sigmoid, log_sum_exp, sigmoid, Activation, BatchNormState, BnMode, Gradients, Tape, Var,
};
pub use tensor::Tensor;

#[cfg(test)]
use tape::column_moments;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("contract violation: {0}")]
    Contract(String),
}
