use rand::Rng;

use super::{Error, Nr5gCode, SpaConfig, SpaDecoder, MESSAGE_BITS};
use crate::rng::{rng_stream, Purpose};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfTestReport {
    pub encodes: usize,
    /// Encodes whose codeword satisfies every parity check.
    pub zero_syndrome: usize,
    /// SPA iterations on a noiseless, unpunctured codeword.
    pub noiseless_iterations: usize,
    pub noiseless_ok: bool,
    /// Noiseless decode with the punctured positions erased.
    pub punctured_ok: bool,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.zero_syndrome == self.encodes
            && self.noiseless_ok
            && self.noiseless_iterations == 1
            && self.punctured_ok
    }
}

/// Encodes `encodes` random messages and checks their syndromes, then decodes
/// one noiseless codeword with and without puncturing.
pub fn self_test(encodes: usize, seed: u64) -> Result<SelfTestReport, Error> {
    let code = Nr5gCode::new()?;
    let mut rng = rng_stream(seed, 0, Purpose::Message);
    let mut zero_syndrome = 0;
    let mut last = None;
    for _ in 0..encodes.max(1) {
        let msg: Vec<u8> = (0..MESSAGE_BITS).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg)?;
        if cw.message() == &msg[..] && code.parity_check().is_codeword(cw.bits())? {
            zero_syndrome += 1;
        }
        last = Some(cw);
    }
    let cw = last.expect("at least one encode");
    let sign = |b: &u8| if *b == 0 { 20.0 } else { -20.0 };
    let dec = SpaDecoder::new(code.parity_check(), SpaConfig::default());
    let full: Vec<f64> = cw.bits().iter().map(sign).collect();
    let out = dec.decode(&full)?;
    let noiseless_ok = out.converged && out.bits == cw.bits();
    let tx: Vec<f64> = code.rate_match(&cw)?.iter().map(sign).collect();
    let out_p = dec.decode(code.depuncture(&tx)?.as_slice())?;
    Ok(SelfTestReport {
        encodes: encodes.max(1),
        zero_syndrome,
        noiseless_iterations: out.iterations,
        noiseless_ok,
        punctured_ok: out_p.converged && out_p.bits == cw.bits(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes() {
        let r = self_test(50, 3).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.zero_syndrome, 50);
    }
}
