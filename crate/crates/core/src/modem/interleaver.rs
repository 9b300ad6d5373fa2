use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Error;
use crate::rng::{rng_stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterleaverKind {
    #[default]
    Random,
    Identity,
}

/// Bit permutation: `interleave(x)[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<u32>,
    inv: Vec<u32>,
}

impl Interleaver {
    pub fn identity(n: usize) -> Self {
        let perm: Vec<u32> = (0..n as u32).collect();
        Interleaver {
            inv: perm.clone(),
            perm,
        }
    }

    /// Fisher–Yates shuffle drawn from the interleaver stream of `seed`.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng_stream(seed, 0, Purpose::Interleaver));
        Self::from_permutation(perm).expect("shuffle is a bijection")
    }

    pub fn from_permutation(perm: Vec<u32>) -> Result<Self, Error> {
        let mut inv = vec![u32::MAX; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            let slot = inv
                .get_mut(p as usize)
                .ok_or_else(|| Error::Contract(format!("index {p} out of range")))?;
            if *slot != u32::MAX {
                return Err(Error::Contract(format!("index {p} repeated")));
            }
            *slot = i as u32;
        }
        Ok(Interleaver { perm, inv })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[u32] {
        &self.perm
    }

    fn check(&self, n: usize) -> Result<(), Error> {
        if n != self.perm.len() {
            return Err(Error::Length {
                expected: self.perm.len(),
                got: n,
            });
        }
        Ok(())
    }

    pub fn interleave<T: Copy>(&self, frame: &[T]) -> Result<Vec<T>, Error> {
        self.check(frame.len())?;
        Ok(self.perm.iter().map(|&p| frame[p as usize]).collect())
    }

    pub fn deinterleave<T: Copy>(&self, frame: &[T]) -> Result<Vec<T>, Error> {
        self.check(frame.len())?;
        Ok(self.inv.iter().map(|&p| frame[p as usize]).collect())
    }
}

pub fn make_interleaver(n: usize, seed: u64, kind: InterleaverKind) -> Result<Interleaver, Error> {
    if n == 0 {
        return Err(Error::Contract("interleaver length must be at least 1".into()));
    }
    Ok(match kind {
        InterleaverKind::Random => Interleaver::random(n, seed),
        InterleaverKind::Identity => Interleaver::identity(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seeded_and_degenerate() {
        let a = make_interleaver(1056, 9, InterleaverKind::Random).unwrap();
        let b = make_interleaver(1056, 9, InterleaverKind::Random).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_interleaver(1056, 10, InterleaverKind::Random).unwrap());
        assert_ne!(a, Interleaver::identity(1056));
        assert_eq!(make_interleaver(1, 9, InterleaverKind::Random).unwrap().permutation(), &[0]);
        assert!(make_interleaver(0, 9, InterleaverKind::Random).is_err());
        assert!(a.interleave(&[0u8; 5]).is_err());
        assert!(Interleaver::from_permutation(vec![0, 0]).is_err());
        assert!(Interleaver::from_permutation(vec![0, 2]).is_err());
    }

    #[test]
    fn demux_groups_partition_the_frame() {
        let pi = make_interleaver(1056, 4, InterleaverKind::Random).unwrap();
        let frame: Vec<u32> = (0..1056).collect();
        let tx = pi.interleave(&frame).unwrap();
        let mut seen: Vec<u32> = tx.chunks(4).flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, frame);
    }

    proptest! {
        #[test]
        fn round_trip(seed in any::<u64>(), frame in prop::collection::vec(-5.0f64..5.0, 1..300)) {
            let pi = make_interleaver(frame.len(), seed, InterleaverKind::Random).unwrap();
            let tx = pi.interleave(&frame).unwrap();
            prop_assert_eq!(pi.deinterleave(&tx).unwrap(), frame.clone());
            let mut a = tx.clone();
            let mut b = frame.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}
