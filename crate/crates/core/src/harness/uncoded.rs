use rand::Rng;

use super::link::SimResult;
use super::Error;
use crate::modem::{awgn_in_place, make_gray_qam, snr_convert};
use crate::rng::{derive_seed, rng_stream, Purpose};

/// Symbols per random stream; the run is a sequence of such chunks.
const CHUNK: u64 = 4096;

/// Hard-decision uncoded Gray-QAM over AWGN. Eb/N0 is converted with rate 1.
/// In the returned rows a "block" is one symbol: `blocks` counts symbols,
/// `block_errors` symbol errors and `bler` the symbol error rate.
pub fn run_uncoded_baseline(
    order: usize,
    ebn0_db: &[f64],
    symbols: u64,
    seed: u64,
) -> Result<Vec<SimResult>, Error> {
    let q = make_gray_qam(order)?;
    let m = q.bits_per_symbol();
    if symbols == 0 {
        return Err(Error::Contract("need at least one symbol".into()));
    }
    ebn0_db
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let (snr_db, sigma2) = snr_convert(e, 1.0, m)?;
            let point_seed = derive_seed(seed, i as u64);
            let mut bit_errors = 0u64;
            let mut sym_errors = 0u64;
            let mut done = 0u64;
            let mut chunk = 0u64;
            let mut labels = Vec::new();
            let mut ys = Vec::new();
            while done < symbols {
                let n = CHUNK.min(symbols - done) as usize;
                let mut rng = rng_stream(point_seed, chunk, Purpose::Uncoded);
                labels.clear();
                labels.extend((0..n).map(|_| rng.random_range(0..order)));
                ys.clear();
                ys.extend(labels.iter().map(|&l| q.points()[l]));
                awgn_in_place(&mut ys, sigma2, &mut rng)?;
                for (&l, y) in labels.iter().zip(&ys) {
                    let d = q.hard_decision(*y) ^ l;
                    bit_errors += d.count_ones() as u64;
                    sym_errors += u64::from(d != 0);
                }
                done += n as u64;
                chunk += 1;
            }
            Ok(SimResult {
                ebn0_db: e,
                snr_db,
                sigma2,
                blocks: symbols,
                bit_errors,
                block_errors: sym_errors,
                ber: bit_errors as f64 / (symbols * m as u64) as f64,
                bler: sym_errors as f64 / symbols as f64,
                avg_spa_iters: 0.0,
                truncated: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    fn q(x: f64) -> f64 {
        0.5 * erfc(x / 2f64.sqrt())
    }

    #[test]
    fn qpsk_matches_q_function() {
        let rows = run_uncoded_baseline(4, &[0.0, 4.0, 7.0], 400_000, 1).unwrap();
        for r in &rows {
            let p = q(1.0 / r.sigma2.sqrt());
            let n = (r.blocks * 2) as f64;
            let sd = (p * (1.0 - p) / n).sqrt();
            assert!((r.ber - p).abs() < 3.0 * sd, "{} vs {p}", r.ber);
        }
        assert!(rows.windows(2).all(|w| w[1].ber < w[0].ber));
    }

    #[test]
    fn sixteen_qam_matches_gray_formula() {
        let rows = run_uncoded_baseline(16, &[4.0, 7.0, 10.0], 400_000, 2).unwrap();
        for r in &rows {
            let d = (1.0 / (5.0 * r.sigma2)).sqrt();
            let p = 0.25 * (3.0 * q(d) + 2.0 * q(3.0 * d) - q(5.0 * d));
            // two bits of a symbol are not independent; allow 3 sd of the
            // per-symbol error count
            let n = r.blocks as f64;
            let per_symbol = 4.0 * p;
            let sd = (per_symbol * (4.0 - per_symbol) / n).sqrt() / 4.0;
            assert!((r.ber - p).abs() < 3.0 * sd, "{} vs {p}", r.ber);
        }
        assert!(rows.windows(2).all(|w| w[1].ber < w[0].ber));
    }
}
