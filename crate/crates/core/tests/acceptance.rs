//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! `HNCM_ACCEPT=6,7,8` restricts the run to the listed criteria.

use std::f64::consts::{LN_2, PI};
use std::path::PathBuf;

use hncm::diffkit::log_sum_exp;
use hncm::harness::{run_coded_link_with, SimConfig, SimResult, System, SystemKind};
use hncm::ldpc5g::self_test;
use hncm::modem::{label_to_bits, make_gray_qam, qam_bit_llrs};
use hncm::neuralmod::{genie_gmi_estimate, loss_grad_check, metric_q, LossKind, ModelCheckpoint};
use hncm::rng::{rng_stream, Purpose};
use num_complex::Complex64;
use rand::Rng;

const SIM_SEED: u64 = 2024;
const SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn checkpoint_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../checkpoints").join(format!("{name}.json"))
}

fn load(name: &str) -> Result<ModelCheckpoint, String> {
    ModelCheckpoint::load(&checkpoint_path(name)).map_err(|e| format!("{name}: {e}"))
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn point(system: &System, ebn0_db: f64) -> Result<SimResult, String> {
    let kind = system.kind();
    let mut cfg = SimConfig::new(kind, system.order(), vec![ebn0_db], SIM_SEED);
    if kind == SystemKind::Dnn {
        cfg.checkpoint = Some(PathBuf::from("in-memory"));
    }
    cfg.min_block_errors = 100;
    cfg.max_blocks = 400_000;
    cfg.shards = threads();
    let r = run_coded_link_with(&cfg, system.clone()).map_err(|e| e.to_string())?;
    Ok(r[0].clone())
}

fn within_factor(v: f64, target: f64, factor: f64) -> bool {
    v > 0.0 && v <= target * factor && v >= target / factor
}

fn describe(r: &SimResult) -> String {
    format!(
        "Eb/N0 {:.4}: BER {:.3e} BLER {:.3e} ({} block errors / {} blocks)",
        r.ebn0_db, r.ber, r.bler, r.block_errors, r.blocks
    )
}

fn criterion_1() -> Result<Verdict, String> {
    let q = System::qam(16).map_err(|e| e.to_string())?;
    let a = point(&q, 4.0897)?;
    let b = point(&q, 4.4897)?;
    let pass = within_factor(a.ber, 1.1455e-3, 2.0)
        && within_factor(b.ber, 9.391e-5, 2.0)
        && a.block_errors >= 100
        && b.block_errors >= 100;
    Ok(verdict(
        pass,
        format!(
            "{} vs 1.1455e-3; {} vs 9.391e-5",
            describe(&a),
            describe(&b)
        ),
    ))
}

fn criterion_2() -> Result<Verdict, String> {
    let q = System::qam(64).map_err(|e| e.to_string())?;
    let a = point(&q, 6.4288)?;
    let b = point(&q, 7.0288)?;
    let pass = within_factor(a.ber, 1.4846e-2, 2.0) && within_factor(b.bler, 1.38e-2, 2.0);
    Ok(verdict(
        pass,
        format!("{} (BER vs 1.4846e-2); {} (BLER vs 1.38e-2)", describe(&a), describe(&b)),
    ))
}

fn criterion_3() -> Result<Verdict, String> {
    let e = 4.2897;
    let qam = point(&System::qam(16).map_err(|e| e.to_string())?, e)?;
    let mut wins = 0;
    let mut parts = vec![format!("QAM BER {:.3e}", qam.ber)];
    for s in SEEDS {
        let ck = load(&format!("m16_gmi_s{s}"))?;
        let r = point(&System::dnn(ck), e)?;
        let ok = r.ber > 0.0 && 2.0 * r.ber <= qam.ber;
        wins += usize::from(ok);
        parts.push(format!("seed {s} BER {:.3e} (gain {:.2}x)", r.ber, qam.ber / r.ber));
    }
    Ok(verdict(wins >= 2, format!("{wins}/3 seeds at >= 2x; {}", parts.join(", "))))
}

/// Eb/N0 where BLER crosses `target`, by log-linear interpolation between the
/// first grid point below the target and its predecessor.
fn bler_crossing(system: &System, start: f64, step: f64, target: f64) -> Result<(f64, String), String> {
    let mut prev: Option<(f64, f64)> = None;
    let mut trace = Vec::new();
    for k in 0..25 {
        let e = ((start + k as f64 * step) * 1e4).round() / 1e4;
        let r = point(system, e)?;
        let bler = r.bler.max(0.5 / r.blocks as f64);
        trace.push(format!("{e:.4}:{bler:.2e}"));
        if bler < target {
            let Some((e0, b0)) = prev else {
                return Err(format!("BLER already below {target:e} at {e} dB"));
            };
            let t = (target.ln() - b0.ln()) / (bler.ln() - b0.ln());
            return Ok((e0 + t * (e - e0), trace.join(" ")));
        }
        prev = Some((e, bler));
    }
    Err(format!("no crossing found: {}", trace.join(" ")))
}

fn criterion_4() -> Result<Verdict, String> {
    let (q, qt) = bler_crossing(&System::qam(64).map_err(|e| e.to_string())?, 6.2288, 0.2, 1e-2)?;
    let mut wins = 0;
    let mut parts = vec![format!("QAM crosses 1e-2 at {q:.3} dB [{qt}]")];
    for s in SEEDS {
        let ck = load(&format!("m64_gmi_s{s}"))?;
        let (d, dt) = bler_crossing(&System::dnn(ck), 5.6288, 0.2, 1e-2)?;
        wins += usize::from(q - d >= 0.5);
        parts.push(format!("seed {s} at {d:.3} dB, shift {:.3} dB [{dt}]", q - d));
    }
    Ok(verdict(wins >= 2, format!("{wins}/3 seeds shift >= 0.5 dB; {}", parts.join("; "))))
}

fn criterion_5() -> Result<Verdict, String> {
    let e = 6.4288;
    let mut wins = 0;
    let mut parts = Vec::new();
    for s in SEEDS {
        let g = point(&System::dnn(load(&format!("m64_gmi_s{s}"))?), e)?;
        let b = point(&System::dnn(load(&format!("m64_bce_s{s}"))?), e)?;
        let ok = g.ber > 0.0 && 2.0 * g.ber <= b.ber;
        wins += usize::from(ok);
        parts.push(format!(
            "seed {s}: GMI {:.3e} BCE {:.3e} ({:.2}x)",
            g.ber,
            b.ber,
            b.ber / g.ber
        ));
    }
    Ok(verdict(wins >= 2, format!("{wins}/3 seeds at >= 2x; {}", parts.join(", "))))
}

fn criterion_6() -> Result<Verdict, String> {
    let mut worst: f64 = 0.0;
    for m in [2, 4] {
        for kind in [LossKind::Gmi, LossKind::Bce] {
            for seed in 1..=3 {
                worst = worst.max(loss_grad_check(kind, m, seed).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(verdict(
        worst < 1e-5,
        format!("largest relative error {worst:.3e} over M in {{4, 16}}, both losses, 3 batches"),
    ))
}

fn criterion_7() -> Result<Verdict, String> {
    let mut names = Vec::new();
    for s in SEEDS {
        names.push(format!("m16_gmi_s{s}"));
        names.push(format!("m64_gmi_s{s}"));
        names.push(format!("m64_bce_s{s}"));
    }
    let mut worst_mean: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    let mut exact = true;
    for n in &names {
        let ck = load(n)?;
        worst_mean = worst_mean.max(ck.constellation.mean().norm());
        worst_power = worst_power.max((ck.constellation.power() - 1.0).abs());
        let text = ck.to_json().map_err(|e| e.to_string())?;
        let back = ModelCheckpoint::from_json(&text).map_err(|e| e.to_string())?;
        exact &= back.model == ck.model
            && back.constellation == ck.constellation
            && back.to_json().map_err(|e| e.to_string())? == text;
        let fresh = ck.model.constellation().map_err(|e| e.to_string())?;
        exact &= fresh.points() == ck.constellation.points();
    }
    Ok(verdict(
        worst_mean < 1e-9 && worst_power < 1e-9 && exact,
        format!(
            "{} checkpoints: max |mean| {worst_mean:.2e}, max |power - 1| {worst_power:.2e}, reload bit-exact: {exact}",
            names.len()
        ),
    ))
}

fn brute_llrs(points: &[Complex64], y: Complex64, sigma2: f64) -> Vec<f64> {
    let m = points.len().trailing_zeros() as usize;
    (0..m)
        .map(|i| {
            let (mut s0, mut s1) = (Vec::new(), Vec::new());
            for (l, x) in points.iter().enumerate() {
                let v = -(y - x).norm_sqr() / sigma2;
                if label_to_bits(l, m)[i] == 0 {
                    s0.push(v)
                } else {
                    s1.push(v)
                }
            }
            log_sum_exp(&s0) - log_sum_exp(&s1)
        })
        .collect()
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// I(X;Y) for equiprobable ±1 over real AWGN of variance `s2`.
fn bi_awgn_mi(s2: f64) -> f64 {
    let s = s2.sqrt();
    let dens = |y: f64| (-(y - 1.0).powi(2) / (2.0 * s2)).exp() / (s * (2.0 * PI).sqrt());
    let soft = |t: f64| if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    1.0 - simpson(1.0 - 14.0 * s, 1.0 + 14.0 * s, 20_000, |y| dens(y) * soft(-2.0 * y / s2)) / LN_2
}

fn toy_identity_gap() -> f64 {
    let mut rng = rng_stream(5, 0, Purpose::Init);
    let (m, nx, ny) = (2, 4, 8);
    let w: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            let raw: Vec<f64> = (0..ny).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|r| r / s).collect()
        })
        .collect();
    let px = 1.0 / nx as f64;
    let py: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| px * w[x][y]).sum()).collect();
    let mut bce_sum = 0.0;
    let mut mi_sum = 0.0;
    for i in 0..m {
        let bit = |x: usize| label_to_bits(x, m)[i];
        for y in 0..ny {
            let p1: f64 = (0..nx).filter(|&x| bit(x) == 1).map(|x| px * w[x][y]).sum::<f64>() / py[y];
            for x in 0..nx {
                bce_sum -= px * w[x][y] * metric_q(bit(x), p1).log2();
            }
            for b in 0..2u8 {
                let joint: f64 = (0..nx).filter(|&x| bit(x) == b).map(|x| px * w[x][y]).sum();
                mi_sum += joint * (joint / (0.5 * py[y])).log2();
            }
        }
    }
    (m as f64 - bce_sum - mi_sum).abs()
}

fn criterion_8() -> Result<Verdict, String> {
    let mut rng = rng_stream(8, 0, Purpose::Noise);
    let mut worst: f64 = 0.0;
    for order in [16, 64] {
        let q = make_gray_qam(order).map_err(|e| e.to_string())?;
        for _ in 0..1000 {
            let y = Complex64::new(rng.random_range(-1.6..1.6), rng.random_range(-1.6..1.6));
            let sigma2 = rng.random_range(0.02..1.0);
            let got = qam_bit_llrs(y, &q, sigma2).map_err(|e| e.to_string())?;
            for (a, b) in got.iter().zip(brute_llrs(q.points(), y, sigma2)) {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    let gap = toy_identity_gap();
    let sigma2 = 1.0;
    let mi = bi_awgn_mi(sigma2 / 2.0);
    let pts = [Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)];
    let mut grng = rng_stream(8, 1, Purpose::Gmi);
    let (est, se) = genie_gmi_estimate(&pts, sigma2, 16_000_000, &mut grng).map_err(|e| e.to_string())?;
    let pass = worst < 1e-9 && gap < 1e-9 && (est - mi).abs() < 1e-3;
    Ok(verdict(
        pass,
        format!(
            "demapper max error {worst:.2e} (2000 points); BCE/GMI identity gap {gap:.2e}; genie estimate {est:.5} ± {se:.1e} vs MI {mi:.5}"
        ),
    ))
}

fn criterion_9() -> Result<Verdict, String> {
    let r = self_test(1000, 9).map_err(|e| e.to_string())?;
    Ok(verdict(
        r.passed(),
        format!(
            "{}/{} zero syndromes; noiseless decode {} in {} iteration(s); punctured noiseless decode {}; BER <= 1e-6 points out of scope",
            r.zero_syndrome,
            r.encodes,
            if r.noiseless_ok { "ok" } else { "failed" },
            r.noiseless_iterations,
            if r.punctured_ok { "ok" } else { "failed" }
        ),
    ))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("HNCM_ACCEPT")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Result<Verdict, String>); 9] = [
        (6, "gradient correctness", criterion_6),
        (7, "constellation invariants", criterion_7),
        (8, "oracle equivalences", criterion_8),
        (9, "LDPC self-test", criterion_9),
        (1, "QAM baseline, M=16", criterion_1),
        (2, "QAM baseline, M=64", criterion_2),
        (3, "DNN gain, M=16", criterion_3),
        (4, "DNN gain, M=64", criterion_4),
        (5, "loss comparison, M=64", criterion_5),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = std::time::Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {id} {} {name}: {detail} [{:.0} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
