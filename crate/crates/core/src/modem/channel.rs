use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::Error;

/// AWGN channel parameters. `sigma2` is the total complex noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub sigma2: f64,
    pub snr_db: f64,
    pub ebn0_db: Option<f64>,
    pub rate: Option<f64>,
    pub bits_per_symbol: Option<usize>,
}

impl ChannelParams {
    pub fn from_snr_db(snr_db: f64) -> Result<Self, Error> {
        if !snr_db.is_finite() {
            return Err(Error::Contract(format!("SNR {snr_db} dB is not finite")));
        }
        Ok(ChannelParams {
            sigma2: 10f64.powf(-snr_db / 10.0),
            snr_db,
            ebn0_db: None,
            rate: None,
            bits_per_symbol: None,
        })
    }

    pub fn from_ebn0_db(ebn0_db: f64, rate: f64, bits_per_symbol: usize) -> Result<Self, Error> {
        let (snr_db, sigma2) = snr_convert(ebn0_db, rate, bits_per_symbol)?;
        Ok(ChannelParams {
            sigma2,
            snr_db,
            ebn0_db: Some(ebn0_db),
            rate: Some(rate),
            bits_per_symbol: Some(bits_per_symbol),
        })
    }

    pub fn noiseless() -> Self {
        ChannelParams {
            sigma2: 0.0,
            snr_db: f64::INFINITY,
            ebn0_db: None,
            rate: None,
            bits_per_symbol: None,
        }
    }
}

/// `snr_db = ebn0_db + 10·log10(R·m)`, `σ² = 10^(−snr_db/10)`.
pub fn snr_convert(ebn0_db: f64, rate: f64, bits_per_symbol: usize) -> Result<(f64, f64), Error> {
    if !(rate > 0.0 && rate <= 1.0) || bits_per_symbol == 0 {
        return Err(Error::Contract(format!(
            "need 0 < R <= 1 and m >= 1, got R={rate} m={bits_per_symbol}"
        )));
    }
    if !ebn0_db.is_finite() {
        return Err(Error::Contract(format!("Eb/N0 {ebn0_db} dB is not finite")));
    }
    let snr_db = ebn0_db + 10.0 * (rate * bits_per_symbol as f64).log10();
    Ok((snr_db, 10f64.powf(-snr_db / 10.0)))
}

/// Inverse of [`snr_convert`].
pub fn ebn0_from_snr(snr_db: f64, rate: f64, bits_per_symbol: usize) -> Result<f64, Error> {
    let (offset, _) = snr_convert(0.0, rate, bits_per_symbol)?;
    Ok(snr_db - offset)
}

/// Adds circular Gaussian noise with variance `σ²/2` per real dimension.
pub fn awgn<R: Rng + ?Sized>(
    x: &[Complex64],
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>, Error> {
    let mut y = x.to_vec();
    awgn_in_place(&mut y, sigma2, rng)?;
    Ok(y)
}

pub fn awgn_in_place<R: Rng + ?Sized>(
    x: &mut [Complex64],
    sigma2: f64,
    rng: &mut R,
) -> Result<(), Error> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::NoiseVariance(sigma2));
    }
    if sigma2 == 0.0 {
        return Ok(());
    }
    let s = (sigma2 / 2.0).sqrt();
    for v in x.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *v += Complex64::new(s * re, s * im);
    }
    Ok(())
}
