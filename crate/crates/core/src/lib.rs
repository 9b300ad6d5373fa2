//! Hybrid neural coded modulation.
//!
//! A learned inner modulator/demodulator pair trained with a GMI-style loss,
//! concatenated with the 5G-NR LDPC code (BG1, Z_c = 24, rate 1/2), plus the
//! Gray-QAM baseline and a Monte Carlo link simulator.

pub mod diffkit;
pub mod ldpc5g;
pub mod modem;
pub mod rng;
pub mod neuralmod;
pub mod harness;
