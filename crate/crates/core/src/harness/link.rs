use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Error;
use crate::ldpc5g::{Nr5gCode, SpaConfig, SpaDecoder, MESSAGE_BITS};
use crate::modem::{
    awgn_in_place, bit_llrs_into, make_gray_qam, make_interleaver, snr_convert, DemapKind,
    Interleaver, InterleaverKind, QamConstellation,
};
use crate::neuralmod::{adapt_demodulator, demodulate_logits, llr_from_logit, ModelCheckpoint};
use crate::rng::{derive_seed, rng_stream, Purpose};

/// Code rate of the outer code after puncturing: 528 / 1056.
pub const CODE_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    #[default]
    Qam,
    Dnn,
}

/// Inner modulator/demodulator pair of a link.
#[derive(Debug, Clone)]
pub enum System {
    Qam {
        constellation: QamConstellation,
        demap: DemapKind,
    },
    Dnn {
        ck: Arc<ModelCheckpoint>,
        /// Re-estimate demodulator batch-norm statistics at each noise level.
        adapt_bn: bool,
    },
}

impl System {
    pub fn qam(order: usize) -> Result<Self, Error> {
        Ok(System::Qam {
            constellation: make_gray_qam(order)?,
            demap: DemapKind::Exact,
        })
    }

    /// Learned system whose demodulator batch-norm statistics follow the
    /// operating noise level (see [`System::at_noise`]).
    pub fn dnn(ck: ModelCheckpoint) -> Self {
        System::Dnn {
            ck: Arc::new(ck),
            adapt_bn: true,
        }
    }

    /// Learned system used exactly as stored.
    pub fn dnn_fixed(ck: ModelCheckpoint) -> Self {
        System::Dnn {
            ck: Arc::new(ck),
            adapt_bn: false,
        }
    }

    /// The system as used at noise variance `sigma2`: for an adapting DNN, a
    /// fixed copy with batch-norm statistics estimated at `sigma2`; otherwise
    /// a clone.
    pub fn at_noise(&self, sigma2: f64) -> Result<System, Error> {
        Ok(match self {
            System::Dnn { ck, adapt_bn: true } => System::dnn_fixed(adapt_demodulator(ck, sigma2)?),
            other => other.clone(),
        })
    }

    pub fn order(&self) -> usize {
        match self {
            System::Qam { constellation, .. } => constellation.order(),
            System::Dnn { ck, .. } => ck.order(),
        }
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order().trailing_zeros() as usize
    }

    pub fn points(&self) -> &[Complex64] {
        match self {
            System::Qam { constellation, .. } => constellation.points(),
            System::Dnn { ck, .. } => ck.constellation.points(),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            System::Qam { .. } => SystemKind::Qam,
            System::Dnn { .. } => SystemKind::Dnn,
        }
    }

    /// Per-bit LLRs (`ln P(0)/P(1)`) for received symbols, `m` per symbol in
    /// label bit order.
    pub fn llrs(&self, ys: &[Complex64], sigma2: f64, out: &mut [f64]) -> Result<(), Error> {
        let m = self.bits_per_symbol();
        if out.len() != ys.len() * m {
            return Err(Error::Contract(format!(
                "{} LLR slots for {} symbols",
                out.len(),
                ys.len()
            )));
        }
        match self {
            System::Qam {
                constellation,
                demap,
            } => {
                for (y, o) in ys.iter().zip(out.chunks_exact_mut(m)) {
                    bit_llrs_into(constellation.points(), *y, sigma2, *demap, o)?;
                }
            }
            System::Dnn { ck, .. } => {
                let z = demodulate_logits(ys, sigma2, &ck.constellation, &ck.model.dec)?;
                for (o, &v) in out.iter_mut().zip(z.data()) {
                    *o = llr_from_logit(v);
                }
            }
        }
        Ok(())
    }
}

fn default_min_block_errors() -> u64 {
    100
}
fn default_max_blocks() -> u64 {
    100_000
}
fn default_spa_iters() -> usize {
    50
}
fn default_bn_adapt() -> bool {
    true
}
fn default_round() -> u64 {
    64
}
fn default_shards() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Coded-link simulation settings. The outer code is fixed to the rate-1/2
/// BG1 code with Z = 24.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: SystemKind,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(rename = "M")]
    pub order: usize,
    pub ebn0_db: Vec<f64>,
    #[serde(default = "default_min_block_errors")]
    pub min_block_errors: u64,
    #[serde(default = "default_max_blocks")]
    pub max_blocks: u64,
    #[serde(default = "default_spa_iters")]
    pub spa_max_iter: usize,
    #[serde(default)]
    pub interleaver: InterleaverKind,
    /// QAM soft demapper; ignored for `dnn`.
    #[serde(default)]
    pub demapper: DemapKind,
    /// Re-estimate DNN demodulator batch-norm statistics at each grid point.
    #[serde(default = "default_bn_adapt")]
    pub bn_adapt: bool,
    #[serde(default)]
    pub interleaver_seed: u64,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[serde(default = "default_shards")]
    pub shards: usize,
    /// Blocks simulated between stop-rule checks.
    #[serde(default = "default_round")]
    pub round_blocks: u64,
}

impl SimConfig {
    pub fn new(system: SystemKind, order: usize, ebn0_db: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            system,
            checkpoint: None,
            order,
            ebn0_db,
            min_block_errors: default_min_block_errors(),
            max_blocks: default_max_blocks(),
            spa_max_iter: default_spa_iters(),
            interleaver: InterleaverKind::Random,
            demapper: DemapKind::Exact,
            bn_adapt: true,
            interleaver_seed: seed,
            seed,
            shards: default_shards(),
            round_blocks: default_round(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.min_block_errors == 0 || self.max_blocks == 0 || self.round_blocks == 0 {
            return Err(Error::Contract("stop rules must be positive".into()));
        }
        if self.shards == 0 {
            return Err(Error::Contract("at least one shard".into()));
        }
        if self.ebn0_db.is_empty() {
            return Err(Error::Contract("empty Eb/N0 grid".into()));
        }
        if self.ebn0_db.iter().any(|v| !v.is_finite())
            || self.ebn0_db.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Contract("Eb/N0 grid must be finite and strictly increasing".into()));
        }
        if self.system == SystemKind::Dnn && self.checkpoint.is_none() {
            return Err(Error::Contract("dnn system needs a checkpoint".into()));
        }
        Ok(())
    }

    /// Loads the configured system (reads the checkpoint for `dnn`).
    pub fn load_system(&self) -> Result<System, Error> {
        let sys = match self.system {
            SystemKind::Qam => System::Qam {
                constellation: make_gray_qam(self.order)?,
                demap: self.demapper,
            },
            SystemKind::Dnn => {
                let path = self
                    .checkpoint
                    .as_ref()
                    .ok_or_else(|| Error::Contract("dnn system needs a checkpoint".into()))?;
                let ck = ModelCheckpoint::load(path)?;
                if self.bn_adapt {
                    System::dnn(ck)
                } else {
                    System::dnn_fixed(ck)
                }
            }
        };
        if sys.order() != self.order {
            return Err(Error::Contract(format!(
                "checkpoint is for M = {}, configuration says M = {}",
                sys.order(),
                self.order
            )));
        }
        Ok(sys)
    }
}

/// One grid point of a coded or uncoded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub ebn0_db: f64,
    pub snr_db: f64,
    pub sigma2: f64,
    pub blocks: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
    pub avg_spa_iters: f64,
    /// The block cap was reached before the block-error target.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    blocks: u64,
    bit_errors: u64,
    block_errors: u64,
    iterations: u64,
}

impl Counts {
    fn merge(self, o: Counts) -> Counts {
        Counts {
            blocks: self.blocks + o.blocks,
            bit_errors: self.bit_errors + o.bit_errors,
            block_errors: self.block_errors + o.block_errors,
            iterations: self.iterations + o.iterations,
        }
    }
}

/// Shared per-run state: code, decoder, interleaver and system.
pub struct Link {
    code: Nr5gCode,
    decoder: SpaDecoder,
    interleaver: Interleaver,
    system: System,
}

impl Link {
    pub fn new(
        system: System,
        spa_max_iter: usize,
        interleaver: InterleaverKind,
        interleaver_seed: u64,
    ) -> Result<Self, Error> {
        let code = Nr5gCode::new()?;
        let m = system.bits_per_symbol();
        if code.frame_len() % m != 0 {
            return Err(Error::Contract(format!(
                "frame of {} bits does not split into {m}-bit symbols",
                code.frame_len()
            )));
        }
        let decoder = SpaDecoder::new(
            code.parity_check(),
            SpaConfig {
                max_iter: spa_max_iter,
                early_exit: true,
            },
        );
        let interleaver = make_interleaver(code.frame_len(), interleaver_seed, interleaver)?;
        Ok(Link {
            code,
            decoder,
            interleaver,
            system,
        })
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    /// Simulates block `block` of the point seeded by `point_seed`. Each block
    /// has its own message and noise streams, so the outcome depends only on
    /// `(point_seed, block)`.
    fn run_block(&self, system: &System, point_seed: u64, block: u64, sigma2: f64) -> Result<Counts, Error> {
        let m = system.bits_per_symbol();
        let mut msg_rng = rng_stream(point_seed, block, Purpose::Message);
        let msg: Vec<u8> = (0..MESSAGE_BITS).map(|_| msg_rng.random_range(0..2u8)).collect();
        let cw = self.code.encode(&msg)?;
        let tx = self.code.rate_match(&cw)?;
        let tx = self.interleaver.interleave(&tx)?;
        let points = system.points();
        let mut ys: Vec<Complex64> = tx
            .chunks_exact(m)
            .map(|c| points[crate::modem::bits_to_label(c)])
            .collect();
        if sigma2 > 0.0 {
            let mut noise_rng = rng_stream(point_seed, block, Purpose::Noise);
            awgn_in_place(&mut ys, sigma2, &mut noise_rng)?;
        }
        let mut llrs = vec![0.0; tx.len()];
        system.llrs(&ys, demap_sigma2(sigma2), &mut llrs)?;
        let llrs = self.interleaver.deinterleave(&llrs)?;
        let frame = self.code.depuncture(&llrs)?;
        let out = self.decoder.decode(frame.as_slice())?;
        let bit_errors = out.bits[..MESSAGE_BITS]
            .iter()
            .zip(&msg)
            .filter(|(a, b)| a != b)
            .count() as u64;
        Ok(Counts {
            blocks: 1,
            bit_errors,
            block_errors: u64::from(bit_errors > 0),
            iterations: out.iterations as u64,
        })
    }

    /// Runs one grid point until `min_block_errors` block errors or
    /// `max_blocks` blocks. Blocks are simulated in fixed rounds and the stop
    /// rule is checked between rounds, so totals do not depend on threading.
    pub fn run_point(
        &self,
        point_seed: u64,
        ebn0_db: f64,
        min_block_errors: u64,
        max_blocks: u64,
        round_blocks: u64,
    ) -> Result<SimResult, Error> {
        let m = self.system.bits_per_symbol();
        let (snr_db, sigma2) = snr_convert(ebn0_db, CODE_RATE, m)?;
        let system = self.system.at_noise(demap_sigma2(sigma2))?;
        let mut total = Counts::default();
        while total.block_errors < min_block_errors && total.blocks < max_blocks {
            let start = total.blocks;
            let end = (start + round_blocks).min(max_blocks);
            let round = (start..end)
                .into_par_iter()
                .map(|b| self.run_block(&system, point_seed, b, sigma2))
                .try_reduce(Counts::default, |a, b| Ok(a.merge(b)))?;
            total = total.merge(round);
        }
        Ok(finish_point(ebn0_db, snr_db, sigma2, total, min_block_errors))
    }
}

/// A noiseless channel is demapped with a tiny variance.
fn demap_sigma2(sigma2: f64) -> f64 {
    sigma2.max(1e-6)
}

fn finish_point(ebn0_db: f64, snr_db: f64, sigma2: f64, c: Counts, min_block_errors: u64) -> SimResult {
    let blocks = c.blocks.max(1) as f64;
    SimResult {
        ebn0_db,
        snr_db,
        sigma2,
        blocks: c.blocks,
        bit_errors: c.bit_errors,
        block_errors: c.block_errors,
        ber: c.bit_errors as f64 / (blocks * MESSAGE_BITS as f64),
        bler: c.block_errors as f64 / blocks,
        avg_spa_iters: c.iterations as f64 / blocks,
        truncated: c.block_errors < min_block_errors,
    }
}

/// Full coded BICM chain over the configured Eb/N0 grid.
pub fn run_coded_link(cfg: &SimConfig) -> Result<Vec<SimResult>, Error> {
    cfg.validate()?;
    let system = cfg.load_system()?;
    run_coded_link_with(cfg, system)
}

/// As [`run_coded_link`] with an already loaded system.
pub fn run_coded_link_with(cfg: &SimConfig, system: System) -> Result<Vec<SimResult>, Error> {
    cfg.validate()?;
    if system.order() != cfg.order {
        return Err(Error::Contract(format!(
            "system has M = {}, configuration says M = {}",
            system.order(),
            cfg.order
        )));
    }
    let link = Link::new(system, cfg.spa_max_iter, cfg.interleaver, cfg.interleaver_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.shards)
        .build()
        .map_err(|e| Error::Contract(e.to_string()))?;
    pool.install(|| {
        cfg.ebn0_db
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                link.run_point(
                    derive_seed(cfg.seed, i as u64),
                    e,
                    cfg.min_block_errors,
                    cfg.max_blocks,
                    cfg.round_blocks,
                )
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_chain_has_no_errors() {
        for order in [4, 16, 64] {
            let mut cfg = SimConfig::new(SystemKind::Qam, order, vec![60.0], 3);
            cfg.max_blocks = 20;
            cfg.round_blocks = 10;
            let r = &run_coded_link(&cfg).unwrap()[0];
            assert_eq!(r.blocks, 20);
            assert_eq!(r.bit_errors, 0);
            assert_eq!(r.avg_spa_iters, 1.0);
            assert!(r.truncated);
        }
    }

    #[test]
    fn shard_count_does_not_change_counts() {
        let mut cfg = SimConfig::new(SystemKind::Qam, 16, vec![3.0, 3.4], 5);
        cfg.max_blocks = 40;
        cfg.min_block_errors = 5;
        cfg.round_blocks = 8;
        cfg.shards = 1;
        let a = run_coded_link(&cfg).unwrap();
        cfg.shards = 3;
        let b = run_coded_link(&cfg).unwrap();
        assert_eq!(a, b);
        for r in &a {
            let (snr, s2) = snr_convert(r.ebn0_db, CODE_RATE, 4).unwrap();
            assert_eq!((r.snr_db, r.sigma2), (snr, s2));
            assert!(r.block_errors <= r.blocks);
            assert!(r.bit_errors <= r.blocks * MESSAGE_BITS as u64);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = SimConfig::new(SystemKind::Qam, 16, vec![3.0, 2.0], 5);
        assert!(run_coded_link(&cfg).is_err());
        cfg.ebn0_db = vec![3.0];
        cfg.min_block_errors = 0;
        assert!(run_coded_link(&cfg).is_err());
        let cfg = SimConfig::new(SystemKind::Dnn, 16, vec![3.0], 5);
        assert!(run_coded_link(&cfg).is_err());
        let cfg = SimConfig::new(SystemKind::Qam, 16, vec![3.0], 5);
        assert!(run_coded_link_with(&cfg, System::qam(64).unwrap()).is_err());
    }
}
