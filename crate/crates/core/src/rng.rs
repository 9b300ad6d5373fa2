//! Reproducible random streams.
//!
//! Every stream is a ChaCha20 keystream: the key comes from the master seed
//! and a purpose tag, the 64-bit stream id is the shard (or block) index.
//! Distinct `(shard, purpose)` pairs therefore never share a keystream and
//! any shard can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Message,
    Noise,
    Interleaver,
    Init,
    Training,
    Validation,
    Gmi,
    Uncoded,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Message => 1,
            Purpose::Noise => 2,
            Purpose::Interleaver => 3,
            Purpose::Init => 4,
            Purpose::Training => 5,
            Purpose::Validation => 6,
            Purpose::Gmi => 7,
            Purpose::Uncoded => 8,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(master, shard, purpose)`.
pub fn rng_stream(master: u64, shard: u64, purpose: Purpose) -> StreamRng {
    let mut state = master;
    let mut key = [0u8; 32];
    // first word is a bijection of `master`; last word is the purpose tag
    for chunk in key[..24].chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key[24..].copy_from_slice(&purpose.tag().to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(shard);
    rng
}

/// Derives a sub-seed, e.g. one per Eb/N0 grid point.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut s = master ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    splitmix64(&mut s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::HashSet;

    #[test]
    fn same_triple_same_stream() {
        let mut a = rng_stream(7, 3, Purpose::Noise);
        let mut b = rng_stream(7, 3, Purpose::Noise);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn shards_do_not_overlap() {
        let mut a = rng_stream(7, 0, Purpose::Noise);
        let mut b = rng_stream(7, 1, Purpose::Noise);
        let xs: HashSet<u64> = (0..1_000_000).map(|_| a.random()).collect();
        assert!((0..1_000_000).all(|_| !xs.contains(&b.random::<u64>())));
    }

    #[test]
    fn purposes_differ() {
        let mut a = rng_stream(7, 0, Purpose::Noise);
        let mut b = rng_stream(7, 0, Purpose::Message);
        let va: Vec<u64> = (0..8).map(|_| a.random()).collect();
        let vb: Vec<u64> = (0..8).map(|_| b.random()).collect();
        assert_ne!(va, vb);
    }
}
