use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::checkpoint::{CheckpointMeta, ModelCheckpoint};
use super::loss::{objective_graph, LossKind, NeuralModem, TrainBatch};
use super::net::{DecoderNet, EncoderNet};
use super::Error;
use crate::diffkit::{AdamParams, BnMode, LrSchedule, LrShape, OptimizerState, Tape, Tensor};
use crate::rng::{rng_stream, Purpose, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Adamw,
}

/// How the labels of a training batch are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchMode {
    /// `batch/M` copies of every label.
    #[default]
    Enumerate,
    /// Independent uniform labels.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub dec_hidden: Vec<usize>,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub weight_decay: f64,
}

impl StageConfig {
    pub fn steps_per_epoch(&self) -> usize {
        (self.samples_per_epoch / self.batch_size).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "M")]
    pub order: usize,
    pub enc_hidden: Vec<usize>,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub train_snr_db: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    #[serde(default)]
    pub lr_shape: LrShape,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub batch_mode: BatchMode,
    /// Held-out symbols (fixed noise) used for early stopping and for the
    /// final batch-norm statistics.
    pub validation_symbols: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Table values for M = 16.
    pub fn paper_m16() -> Self {
        TrainConfig {
            order: 16,
            enc_hidden: vec![16, 64, 32],
            stage1: StageConfig {
                dec_hidden: vec![128],
                batch_size: 320,
                samples_per_epoch: 16 * 4800,
                max_epochs: 300,
                patience: 20,
                optimizer: OptimizerKind::Adamw,
                weight_decay: 0.01,
            },
            stage2: StageConfig {
                dec_hidden: vec![128],
                batch_size: 25600,
                samples_per_epoch: 16 * 4800,
                max_epochs: 1000,
                patience: 20,
                optimizer: OptimizerKind::Adam,
                weight_decay: 0.0,
            },
            train_snr_db: 7.0,
            lr_max: 0.1,
            lr_min: 0.001,
            lr_shape: LrShape::Plateau,
            loss: LossKind::Gmi,
            batch_mode: BatchMode::Enumerate,
            validation_symbols: 16 * 1250,
            seed: 1,
        }
    }

    /// Table values for M = 64.
    pub fn paper_m64() -> Self {
        TrainConfig {
            order: 64,
            enc_hidden: vec![64, 128, 128, 128],
            stage1: StageConfig {
                dec_hidden: vec![128],
                batch_size: 64 * 20,
                samples_per_epoch: 64 * 3200,
                max_epochs: 300,
                patience: 20,
                optimizer: OptimizerKind::Adamw,
                weight_decay: 0.2,
            },
            stage2: StageConfig {
                dec_hidden: vec![64, 128],
                batch_size: 64 * 1600,
                samples_per_epoch: 64 * 3200,
                max_epochs: 1000,
                patience: 20,
                optimizer: OptimizerKind::Adam,
                weight_decay: 0.0,
            },
            train_snr_db: 11.5,
            lr_max: 0.1,
            lr_min: 0.001,
            lr_shape: LrShape::Plateau,
            loss: LossKind::Gmi,
            batch_mode: BatchMode::Enumerate,
            validation_symbols: 64 * 500,
            seed: 1,
        }
    }

    /// Tiny M = 4 setup for tests.
    pub fn smoke() -> Self {
        TrainConfig {
            order: 4,
            enc_hidden: vec![4, 8],
            stage1: StageConfig {
                dec_hidden: vec![8],
                batch_size: 32,
                samples_per_epoch: 640,
                max_epochs: 2,
                patience: 5,
                optimizer: OptimizerKind::Adamw,
                weight_decay: 0.01,
            },
            stage2: StageConfig {
                dec_hidden: vec![16],
                batch_size: 128,
                samples_per_epoch: 1280,
                max_epochs: 2,
                patience: 5,
                optimizer: OptimizerKind::Adam,
                weight_decay: 0.0,
            },
            train_snr_db: 3.0,
            lr_max: 0.01,
            lr_min: 0.001,
            lr_shape: LrShape::Step,
            loss: LossKind::Gmi,
            batch_mode: BatchMode::Enumerate,
            validation_symbols: 400,
            seed: 1,
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if self.order < 2 || !self.order.is_power_of_two() || self.order > 1 << 12 {
            return bad(format!("M = {} is not a power of two in [2, 4096]", self.order));
        }
        if self.enc_hidden.is_empty() || self.enc_hidden.contains(&0) {
            return bad(format!("encoder widths {:?}", self.enc_hidden));
        }
        for (name, s) in [("stage1", &self.stage1), ("stage2", &self.stage2)] {
            if s.dec_hidden.contains(&0) {
                return bad(format!("{name}: decoder widths {:?}", s.dec_hidden));
            }
            if s.batch_size < 2 || s.max_epochs == 0 || s.samples_per_epoch == 0 {
                return bad(format!("{name}: batch, epochs and samples must be positive"));
            }
            if self.batch_mode == BatchMode::Enumerate && s.batch_size % self.order != 0 {
                return bad(format!(
                    "{name}: batch size {} is not a multiple of M = {}",
                    s.batch_size, self.order
                ));
            }
            if !(s.weight_decay >= 0.0) {
                return bad(format!("{name}: weight decay {}", s.weight_decay));
            }
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return bad(format!("learning rates {} .. {}", self.lr_min, self.lr_max));
        }
        if !self.train_snr_db.is_finite() {
            return bad("training SNR must be finite".into());
        }
        if self.validation_symbols < 2 {
            return bad("validation needs at least 2 symbols".into());
        }
        Ok(())
    }

    pub fn sigma2(&self) -> f64 {
        10f64.powf(-self.train_snr_db / 10.0)
    }
}

/// Progress of one epoch, passed to the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub stage: u8,
    pub epoch: usize,
    pub lr: f64,
    pub train_objective: f64,
    pub val_gmi: f64,
    pub val_bce: f64,
    pub improved: bool,
}

fn draw_noise(rng: &mut StreamRng, n: usize, sigma2: f64) -> Vec<Complex64> {
    let s = (sigma2 / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect()
}

fn draw_batch(rng: &mut StreamRng, n: usize, order: usize, mode: BatchMode, sigma2: f64) -> TrainBatch {
    let labels = match mode {
        BatchMode::Enumerate => (0..n).map(|i| i % order).collect(),
        BatchMode::Random => (0..n).map(|_| rng.random_range(0..order)).collect(),
    };
    TrainBatch {
        labels,
        noise: draw_noise(rng, n, sigma2),
        sigma2,
    }
}

/// Held-out batch for `(seed, stage)`: every label repeated, fixed noise.
pub fn validation_batch(cfg: &TrainConfig, stage: u8) -> TrainBatch {
    let n = cfg.validation_symbols.div_ceil(cfg.order) * cfg.order;
    let mut rng = rng_stream(cfg.seed, stage as u64, Purpose::Validation);
    draw_batch(&mut rng, n, cfg.order, BatchMode::Enumerate, cfg.sigma2())
}

fn graph_error(e: Error, stage: u8, step: usize) -> Error {
    Error::Diverged {
        stage,
        step,
        detail: e.to_string(),
    }
}

/// Sets every batch-norm layer's running statistics to the exact statistics
/// of one train-mode pass over `batch`, after which infer mode reproduces
/// that pass.
pub fn recalibrate_batch_norm(model: &mut NeuralModem, batch: &TrainBatch) -> Result<(), Error> {
    let layers = model
        .enc
        .net
        .layers
        .iter_mut()
        .chain(model.dec.net.layers.iter_mut());
    let mut saved = Vec::new();
    for l in layers {
        if let Some(bn) = &mut l.bn {
            saved.push(bn.momentum);
            bn.momentum = 1.0;
        }
    }
    let mut tape = Tape::new();
    let vars: Vec<_> = model
        .params()
        .into_iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let result = model.forward(&mut tape, &vars, batch, BnMode::Train).map(|_| ());
    let layers = model
        .enc
        .net
        .layers
        .iter_mut()
        .chain(model.dec.net.layers.iter_mut());
    let mut it = saved.into_iter();
    for l in layers {
        if let Some(bn) = &mut l.bn {
            bn.momentum = it.next().expect("one per layer");
        }
    }
    result
}

/// Copy of `ck` whose demodulator batch-norm statistics are re-estimated on
/// a synthetic batch at noise variance `sigma2`. Encoder, constellation and
/// all trained weights are unchanged.
pub fn adapt_demodulator(ck: &ModelCheckpoint, sigma2: f64) -> Result<ModelCheckpoint, Error> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Contract(format!("noise variance {sigma2} must be positive")));
    }
    let order = ck.order();
    let n = ck
        .meta
        .config
        .as_ref()
        .map_or(1250 * order, |c| c.validation_symbols)
        .div_ceil(order)
        * order;
    let mut rng = rng_stream(ck.meta.seed, 3, Purpose::Validation);
    let batch = draw_batch(&mut rng, n, order, BatchMode::Enumerate, sigma2);
    let mut out = ck.clone();
    recalibrate_batch_norm(&mut out.model, &batch)?;
    out.model.enc = ck.model.enc.clone();
    Ok(out)
}

/// Validation GMI (bits/symbol) and BCE (bits/bit) in infer mode.
pub fn evaluate(model: &NeuralModem, batch: &TrainBatch) -> Result<(f64, f64), Error> {
    let mut work = model.clone();
    let mut tape = Tape::new();
    let vars: Vec<_> = work
        .params()
        .into_iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let out = work.forward(&mut tape, &vars, batch, BnMode::Infer)?;
    let m = work.bits_per_symbol();
    let g = super::loss::gmi_loss_graph(&mut tape, &out, m)?;
    let b = super::loss::bce_loss_graph(&mut tape, &out)?;
    Ok((
        tape.value(g).item().expect("scalar"),
        tape.value(b).item().expect("scalar"),
    ))
}

const MIN_POINT_DISTANCE: f64 = 1e-6;

fn score(kind: LossKind, gmi: f64, bce: f64) -> f64 {
    match kind {
        LossKind::Gmi => -gmi,
        LossKind::Bce => bce,
    }
}

/// Trains `model` for one stage and returns the best validated snapshot with
/// its validation `(gmi, bce)`.
fn run_stage(
    cfg: &TrainConfig,
    stage: u8,
    mut model: NeuralModem,
    observer: &mut dyn FnMut(&EpochReport),
) -> Result<(NeuralModem, f64, f64), Error> {
    let sc = if stage == 1 { &cfg.stage1 } else { &cfg.stage2 };
    let steps_per_epoch = sc.steps_per_epoch();
    let total = sc.max_epochs * steps_per_epoch;
    let schedule = LrSchedule {
        lr_max: cfg.lr_max,
        lr_min: cfg.lr_min,
        shape: cfg.lr_shape,
    };
    let hyper = AdamParams {
        lr: cfg.lr_max,
        weight_decay: match sc.optimizer {
            OptimizerKind::Adam => 0.0,
            OptimizerKind::Adamw => sc.weight_decay,
        },
        ..AdamParams::default()
    };
    let mut opt = OptimizerState::new(model.params(), hyper);
    let mut rng = rng_stream(cfg.seed, stage as u64, Purpose::Training);
    let val = validation_batch(cfg, stage);
    let m = model.bits_per_symbol();
    let sigma2 = cfg.sigma2();

    let mut best: Option<(NeuralModem, f64, f64)> = None;
    let mut best_score = f64::INFINITY;
    let mut since = 0;
    let mut step = 0;
    let plateau = cfg.lr_shape == LrShape::Plateau;
    let mut plateau_lr = cfg.lr_max;
    for epoch in 0..sc.max_epochs {
        let mut lr = cfg.lr_max;
        let mut acc = 0.0;
        let mut run_epoch = || -> Result<(NeuralModem, f64, f64), Error> {
            for _ in 0..steps_per_epoch {
                lr = if plateau { plateau_lr } else { schedule.at(step, total)? };
                opt.set_lr(lr);
                let batch = draw_batch(&mut rng, sc.batch_size, cfg.order, cfg.batch_mode, sigma2);
                let mut tape = Tape::new();
                let vars = model.push_params(&mut tape);
                let out = model
                    .forward(&mut tape, &vars, &batch, BnMode::Train)
                    .map_err(|e| graph_error(e, stage, step))?;
                let loss = objective_graph(&mut tape, &out, cfg.loss, m)?;
                let value = tape.value(loss).item().expect("scalar");
                if !value.is_finite() {
                    return Err(Error::Diverged {
                        stage,
                        step,
                        detail: format!("loss {value}"),
                    });
                }
                acc += value;
                let grads = tape.backward(loss).map_err(|e| graph_error(e.into(), stage, step))?;
                let g: Vec<Tensor> = vars
                    .iter()
                    .zip(model.params())
                    .map(|(&v, p)| grads.get_or_zeros(v, p))
                    .collect();
                opt.step(&mut model.params_mut(), &g)
                    .map_err(|e| graph_error(e.into(), stage, step))?;
                step += 1;
            }
            let mut snapshot = model.clone();
            recalibrate_batch_norm(&mut snapshot, &val).map_err(|e| graph_error(e, stage, step))?;
            let (gmi, bce) = evaluate(&snapshot, &val).map_err(|e| graph_error(e, stage, step))?;
            Ok((snapshot, gmi, bce))
        };
        let (snapshot, gmi, bce) = match run_epoch() {
            Ok(r) => r,
            // a blow-up under the plateau shape is treated as a stall
            Err(e @ Error::Diverged { .. }) => {
                let Some((b, _, _)) = best.as_ref().filter(|_| plateau && plateau_lr > cfg.lr_min * (1.0 + 1e-9))
                else {
                    return Err(e);
                };
                plateau_lr = (plateau_lr * 0.1).max(cfg.lr_min);
                model = b.clone();
                opt = OptimizerState::new(model.params(), AdamParams { lr: plateau_lr, ..hyper });
                since = 0;
                continue;
            }
            Err(e) => return Err(e),
        };
        let s = score(cfg.loss, gmi, bce);
        // a snapshot with merged points can never be saved, so it cannot be best
        let separable = snapshot.constellation()?.min_distance() >= MIN_POINT_DISTANCE;
        let improved = separable && s < best_score;
        if improved {
            best_score = s;
            best = Some((snapshot, gmi, bce));
            since = 0;
        } else {
            since += 1;
        }
        observer(&EpochReport {
            stage,
            epoch,
            lr,
            train_objective: acc / steps_per_epoch as f64,
            val_gmi: gmi,
            val_bce: bce,
            improved,
        });
        if since >= sc.patience {
            if !plateau || plateau_lr <= cfg.lr_min * (1.0 + 1e-9) {
                break;
            }
            // continue from the best snapshot with a fresh optimizer
            plateau_lr = (plateau_lr * 0.1).max(cfg.lr_min);
            if let Some((b, _, _)) = &best {
                model = b.clone();
            }
            opt = OptimizerState::new(model.params(), AdamParams { lr: plateau_lr, ..hyper });
            since = 0;
        }
    }
    best.ok_or_else(|| Error::Degenerate(format!("stage {stage}: every validated snapshot had two labels on one point")))
}

fn finish(
    cfg: &TrainConfig,
    stage: u8,
    model: NeuralModem,
    gmi: f64,
    bce: f64,
) -> Result<ModelCheckpoint, Error> {
    let final_loss = match cfg.loss {
        LossKind::Gmi => gmi,
        LossKind::Bce => bce,
    };
    ModelCheckpoint::new(
        model,
        CheckpointMeta {
            seed: cfg.seed,
            stage,
            loss_kind: cfg.loss,
            train_snr_db: cfg.train_snr_db,
            final_loss,
            config: Some(cfg.clone()),
        },
    )
}

/// Stage 1: encoder and small decoder from scratch.
pub fn train_stage1(
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport),
) -> Result<ModelCheckpoint, Error> {
    cfg.validate()?;
    let m = cfg.bits_per_symbol();
    let mut rng = rng_stream(cfg.seed, 1, Purpose::Init);
    let enc = EncoderNet::new(m, &cfg.enc_hidden, &mut rng)?;
    let dec = DecoderNet::new(m, &cfg.stage1.dec_hidden, &mut rng)?;
    let model = NeuralModem::new(enc, dec)?;
    let (model, gmi, bce) = run_stage(cfg, 1, model, observer)?;
    finish(cfg, 1, model, gmi, bce)
}

/// Stage 2: keeps the pretrained encoder, replaces the decoder with a freshly
/// initialized larger one and trains both.
pub fn train_stage2(
    cfg: &TrainConfig,
    stage1: &ModelCheckpoint,
    observer: &mut dyn FnMut(&EpochReport),
) -> Result<ModelCheckpoint, Error> {
    cfg.validate()?;
    if stage1.meta.stage != 1 {
        return Err(Error::Checkpoint(format!(
            "stage 2 resumes from a stage-1 checkpoint, got stage {}",
            stage1.meta.stage
        )));
    }
    if stage1.model.order() != cfg.order || stage1.model.enc.hidden() != cfg.enc_hidden {
        return Err(Error::Checkpoint(
            "checkpoint architecture does not match the configuration".into(),
        ));
    }
    let m = cfg.bits_per_symbol();
    let mut rng = rng_stream(cfg.seed, 2, Purpose::Init);
    let dec = DecoderNet::new(m, &cfg.stage2.dec_hidden, &mut rng)?;
    let model = NeuralModem::new(stage1.model.enc.clone(), dec)?;
    let (model, gmi, bce) = run_stage(cfg, 2, model, observer)?;
    finish(cfg, 2, model, gmi, bce)
}

pub fn train_two_stage(
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochReport),
) -> Result<ModelCheckpoint, Error> {
    let s1 = train_stage1(cfg, observer)?;
    train_stage2(cfg, &s1, observer)
}
