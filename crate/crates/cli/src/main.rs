use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hncm::harness::{
    self, estimate_gmi, export_constellation, results_csv, run_coded_link_with, run_uncoded_baseline, RunRecord,
    SimConfig, System, SystemKind,
};
use hncm::ldpc5g::self_test;
use hncm::modem::{DemapKind, InterleaverKind};
use hncm::neuralmod::{self, loss_grad_check, train_stage1, train_stage2, EpochReport, LossKind, ModelCheckpoint, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "hncm", version, about = "Hybrid neural coded modulation: train, evaluate, plot")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a neural modulator from a JSON configuration.
    Train(TrainArgs),
    /// Coded BER/BLER over an Eb/N0 grid.
    Eval(EvalArgs),
    /// Uncoded hard-decision QAM BER over an Eb/N0 grid.
    Uncoded(UncodedArgs),
    /// Monte Carlo GMI estimate at one or more SNRs.
    Gmi(GmiArgs),
    /// Export a constellation as CSV.
    Constellation(ConstellationArgs),
    /// Render results or constellation CSVs to SVG.
    Plot(PlotArgs),
    /// Check LDPC encoder syndromes and noiseless decoding.
    LdpcSelftest(SelftestArgs),
    /// Compare loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SystemArg {
    Qam,
    Dnn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageArg,
    /// Stage-1 checkpoint to continue from (stage 2 only).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-epoch history as CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct SystemSel {
    #[arg(long, value_enum)]
    system: SystemArg,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "mod")]
    order: usize,
    /// Use the stored demodulator batch-norm statistics at every SNR.
    #[arg(long)]
    no_bn_adapt: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// SimConfig JSON; flags below are then ignored.
    #[arg(long, conflicts_with_all = ["system", "checkpoint", "order", "ebn0", "seed"])]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    system: Option<SystemArg>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long = "mod", required_unless_present = "config")]
    order: Option<usize>,
    /// start:step:stop in dB, or a single value.
    #[arg(long, required_unless_present = "config")]
    ebn0: Option<String>,
    #[arg(long)]
    min_block_errors: Option<u64>,
    #[arg(long)]
    max_blocks: Option<u64>,
    #[arg(long)]
    shards: Option<usize>,
    #[arg(long)]
    spa_iters: Option<usize>,
    #[arg(long)]
    interleaver_seed: Option<u64>,
    #[arg(long, value_enum)]
    interleaver: Option<InterleaverArg>,
    #[arg(long, value_enum)]
    demapper: Option<DemapperArg>,
    /// Use the stored demodulator batch-norm statistics at every SNR.
    #[arg(long)]
    no_bn_adapt: bool,
    #[arg(long, required_unless_present = "config")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DemapperArg {
    Exact,
    Maxlog,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InterleaverArg {
    Random,
    Identity,
}

#[derive(Args, Debug)]
struct UncodedArgs {
    #[arg(long = "mod")]
    order: usize,
    #[arg(long)]
    ebn0: String,
    #[arg(long, default_value_t = 1_000_000)]
    symbols: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GmiArgs {
    #[command(flatten)]
    sel: SystemSel,
    /// start:step:stop in dB, or a single value.
    #[arg(long)]
    snr: String,
    #[arg(long, default_value_t = 100_000)]
    symbols: u64,
    #[arg(long)]
    seed: u64,
    /// JSON output; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConstellationArgs {
    #[command(flatten)]
    sel: SystemSel,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long = "input", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1000)]
    encodes: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Debug)]
enum Failure {
    Contract(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Contract(_) => 1,
            Failure::Io(_) => 2,
        }
    }
}

impl From<harness::Error> for Failure {
    fn from(e: harness::Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Contract(e.to_string())
        }
    }
}

impl From<neuralmod::Error> for Failure {
    fn from(e: neuralmod::Error) -> Self {
        harness::Error::from(e).into()
    }
}

impl From<hncm::ldpc5g::Error> for Failure {
    fn from(e: hncm::ldpc5g::Error) -> Self {
        Failure::Contract(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn parse_grid(s: &str) -> Res<Vec<f64>> {
    let bad = || Failure::Contract(format!("bad grid `{s}`, expected start:step:stop"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Res<_>>()?;
    match parts[..] {
        [v] if v.is_finite() => Ok(vec![v]),
        [start, step, stop] if start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start => {
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            if n > 10_000 {
                return Err(bad());
            }
            Ok((0..=n)
                .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
                .collect())
        }
        _ => Err(bad()),
    }
}

fn read_text(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    std::fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn record_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

fn load_system(sel: &SystemSel) -> Res<System> {
    let mut cfg = SimConfig::new(kind(sel.system), sel.order, vec![0.0], 0);
    cfg.checkpoint = sel.checkpoint.clone();
    cfg.bn_adapt = !sel.no_bn_adapt;
    Ok(cfg.load_system()?)
}

fn kind(s: SystemArg) -> SystemKind {
    match s {
        SystemArg::Qam => SystemKind::Qam,
        SystemArg::Dnn => SystemKind::Dnn,
    }
}

fn train(a: &TrainArgs, argv: &[String]) -> Res<()> {
    let text = read_text(&a.config)?;
    let mut cfg: TrainConfig =
        serde_json::from_str(&text).map_err(|e| Failure::Contract(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let mut record = RunRecord::new(argv.to_vec(), serde_json::to_value(&cfg).unwrap_or_default(), vec![cfg.seed]);
    let mut history = String::from("stage,epoch,lr,train_objective,val_gmi,val_bce,improved\n");
    let quiet = a.quiet;
    let mut last = (0u8, None::<usize>);
    let mut observer = |r: &EpochReport| {
        let expected = if last.0 == r.stage { last.1.map_or(0, |e| e + 1) } else { 0 };
        if !quiet && r.epoch > expected {
            eprintln!("stage {} epochs {expected}..{} diverged; restarted from the best snapshot", r.stage, r.epoch - 1);
        }
        last = (r.stage, Some(r.epoch));
        writeln!(
            history,
            "{},{},{:e},{:.10e},{:.10e},{:.10e},{}",
            r.stage, r.epoch, r.lr, r.train_objective, r.val_gmi, r.val_bce, r.improved
        )
        .unwrap();
        if !quiet {
            eprintln!(
                "stage {} epoch {:>3} lr {:.0e} objective {:+.5} val gmi {:.5} bce {:.5}{}",
                r.stage,
                r.epoch,
                r.lr,
                r.train_objective,
                r.val_gmi,
                r.val_bce,
                if r.improved { " *" } else { "" }
            );
        }
    };
    let ck = match (a.stage, &a.resume) {
        (StageArg::One, None) => train_stage1(&cfg, &mut observer)?,
        (StageArg::One, Some(_)) => return Err(Failure::Contract("--resume applies to stage 2".into())),
        (StageArg::Two, None) => return Err(Failure::Contract("stage 2 needs --resume <stage-1 checkpoint>".into())),
        (StageArg::Two | StageArg::Both, Some(p)) => {
            let s1 = ModelCheckpoint::load(p)?;
            train_stage2(&cfg, &s1, &mut observer)?
        }
        (StageArg::Both, None) => {
            let s1 = train_stage1(&cfg, &mut observer)?;
            train_stage2(&cfg, &s1, &mut observer)?
        }
    };
    ck.save(&a.out)?;
    record.outputs.push(a.out.display().to_string());
    if let Some(log) = &a.log {
        write_text(log, &history)?;
        record.outputs.push(log.display().to_string());
    }
    let c = &ck.constellation;
    println!(
        "saved {} (M = {}, stage {}, final loss {:.6}, mean |{:.1e}|, power {:.12})",
        a.out.display(),
        ck.order(),
        ck.meta.stage,
        ck.meta.final_loss,
        c.mean().norm(),
        c.power()
    );
    Ok(record.finish(&record_path(&a.out))?)
}

fn eval(a: &EvalArgs, argv: &[String]) -> Res<()> {
    let mut cfg = match &a.config {
        Some(path) => serde_json::from_str::<SimConfig>(&read_text(path)?)
            .map_err(|e| Failure::Contract(format!("{}: {e}", path.display())))?,
        None => {
            let (Some(system), Some(order), Some(grid), Some(seed)) = (a.system, a.order, &a.ebn0, a.seed) else {
                return Err(Failure::Contract("eval needs --system, --mod, --ebn0 and --seed".into()));
            };
            let mut c = SimConfig::new(kind(system), order, parse_grid(grid)?, seed);
            c.checkpoint = a.checkpoint.clone();
            c
        }
    };
    if let Some(v) = a.min_block_errors {
        cfg.min_block_errors = v;
    }
    if let Some(v) = a.max_blocks {
        cfg.max_blocks = v;
    }
    if let Some(v) = a.shards {
        cfg.shards = v;
    }
    if let Some(v) = a.spa_iters {
        cfg.spa_max_iter = v;
    }
    if let Some(v) = a.interleaver_seed {
        cfg.interleaver_seed = v;
    }
    if let Some(v) = a.interleaver {
        cfg.interleaver = match v {
            InterleaverArg::Random => InterleaverKind::Random,
            InterleaverArg::Identity => InterleaverKind::Identity,
        };
    }
    if let Some(v) = a.demapper {
        cfg.demapper = match v {
            DemapperArg::Exact => DemapKind::Exact,
            DemapperArg::Maxlog => DemapKind::MaxLog,
        };
    }
    if a.no_bn_adapt {
        cfg.bn_adapt = false;
    }
    cfg.validate()?;
    let system = cfg.load_system()?;
    let mut record = RunRecord::new(argv.to_vec(), serde_json::to_value(&cfg).unwrap_or_default(), vec![cfg.seed, cfg.interleaver_seed]);
    let rows = run_coded_link_with(&cfg, system)?;
    for r in &rows {
        println!(
            "Eb/N0 {:.4} dB  blocks {:>7}  BER {:.4e}  BLER {:.4e}  iters {:.2}{}",
            r.ebn0_db,
            r.blocks,
            r.ber,
            r.bler,
            r.avg_spa_iters,
            if r.truncated { "  (truncated)" } else { "" }
        );
    }
    write_text(&a.out, &results_csv(&rows))?;
    record.outputs.push(a.out.display().to_string());
    Ok(record.finish(&record_path(&a.out))?)
}

fn uncoded(a: &UncodedArgs, argv: &[String]) -> Res<()> {
    let grid = parse_grid(&a.ebn0)?;
    let mut record = RunRecord::new(
        argv.to_vec(),
        serde_json::json!({"M": a.order, "ebn0_db": grid, "symbols": a.symbols, "seed": a.seed}),
        vec![a.seed],
    );
    let rows = run_uncoded_baseline(a.order, &grid, a.symbols, a.seed)?;
    for r in &rows {
        println!("Eb/N0 {:.4} dB  BER {:.4e}  SER {:.4e}", r.ebn0_db, r.ber, r.bler);
    }
    write_text(&a.out, &results_csv(&rows))?;
    record.outputs.push(a.out.display().to_string());
    Ok(record.finish(&record_path(&a.out))?)
}

fn gmi(a: &GmiArgs) -> Res<()> {
    let system = load_system(&a.sel)?;
    let ests = parse_grid(&a.snr)?
        .into_iter()
        .map(|snr| estimate_gmi(&system, snr, a.symbols, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let text = serde_json::to_string_pretty(&ests).map_err(|e| Failure::Contract(e.to_string()))?;
    match &a.out {
        Some(p) => write_text(p, &text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn constellation(a: &ConstellationArgs) -> Res<()> {
    let system = load_system(&a.sel)?;
    Ok(export_constellation(system.points(), &a.out)?)
}

fn plot(a: &PlotArgs) -> Res<()> {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    Ok(harness::emit_plot(&inputs, &a.out)?)
}

fn selftest(a: &SelftestArgs) -> Res<()> {
    let r = self_test(a.encodes, a.seed)?;
    println!("encodes with zero syndrome: {}/{}", r.zero_syndrome, r.encodes);
    println!(
        "noiseless decode: {} in {} iteration(s)",
        if r.noiseless_ok { "ok" } else { "FAILED" },
        r.noiseless_iterations
    );
    println!("punctured noiseless decode: {}", if r.punctured_ok { "ok" } else { "FAILED" });
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Contract("LDPC self-test failed".into()))
    }
}

fn gradcheck(a: &GradcheckArgs) -> Res<()> {
    let mut ok = true;
    for (m, order) in [(2, 4), (4, 16)] {
        for kind in [LossKind::Gmi, LossKind::Bce] {
            let err = loss_grad_check(kind, m, a.seed)?;
            let pass = err < a.tol;
            ok &= pass;
            println!(
                "{:?} M={order}: max relative error {err:.3e} {}",
                kind,
                if pass { "ok" } else { "FAILED" }
            );
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Contract("gradient check failed".into()))
    }
}

fn run(cli: &Cli, argv: &[String]) -> Res<()> {
    match &cli.cmd {
        Cmd::Train(a) => train(a, argv),
        Cmd::Eval(a) => eval(a, argv),
        Cmd::Uncoded(a) => uncoded(a, argv),
        Cmd::Gmi(a) => gmi(a),
        Cmd::Constellation(a) => constellation(a),
        Cmd::Plot(a) => plot(a),
        Cmd::LdpcSelftest(a) => selftest(a),
        Cmd::Gradcheck(a) => gradcheck(a),
    }
}

fn cli_main(argv: Vec<OsString>) -> u8 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &argv) {
        Ok(()) => 0,
        Err(f) => {
            match &f {
                Failure::Contract(m) => eprintln!("error: {m}"),
                Failure::Io(m) => eprintln!("i/o error: {m}"),
            }
            f.code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(cli_main(std::env::args_os().collect()))
}
