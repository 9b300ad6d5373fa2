//! 5G-NR LDPC outer code: base-graph lifting, systematic encoding, rate
//! matching by puncturing, and a sum-product decoder.

mod base_graph;
mod code;
mod decoder;
mod matrix;
mod selftest;

pub use base_graph::{BaseGraph, BG1_SET1_TABLE, LIFTING_SETS, MAX_LIFTING};
pub use code::{
    Codeword, LlrFrame, Nr5gCode, CODEWORD_BITS, FRAME_BITS, MESSAGE_BITS, PUNCTURED_BITS, Z_C,
};
pub use decoder::{spa_decode, DecodeOutcome, SpaConfig, SpaDecoder, LLR_CLIP};
pub use matrix::{syndrome, ParityCheckMatrix};
pub use selftest::{self_test, SelfTestReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("base graph line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}
