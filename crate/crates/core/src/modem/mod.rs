//! Channel-side primitives: AWGN, SNR bookkeeping, Gray-QAM with exact
//! bit-LLR demapping, and the bit interleaver.

mod channel;
mod interleaver;
mod qam;

pub use channel::{awgn, awgn_in_place, ebn0_from_snr, snr_convert, ChannelParams};
pub use interleaver::{make_interleaver, Interleaver, InterleaverKind};
pub use num_complex::Complex64;
pub use qam::{
    bit_llrs_into, make_gray_qam, nearest, qam_bit_llrs, qam_modulate, DemapKind,
    QamConstellation,
};

pub type ComplexSymbol = Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported QAM order {0}")]
    UnsupportedOrder(usize),
    #[error("noise variance must be positive and finite, got {0}")]
    NoiseVariance(f64),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    Contract(String),
}

/// MSB-first bits of `label`.
pub fn label_to_bits(label: usize, m: usize) -> Vec<u8> {
    (0..m).map(|i| (label >> (m - 1 - i) & 1) as u8).collect()
}

pub fn bits_to_label(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| acc << 1 | (b & 1) as usize)
}
