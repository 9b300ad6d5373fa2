use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hncm"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hncm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

fn s(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eval_writes_one_row_per_grid_point() {
    let out = tmp("q16.csv");
    let o = run(&[
        "eval", "--system", "qam", "--mod", "16", "--ebn0", "3.49:0.2:5.09", "--seed", "7",
        "--max-blocks", "4", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ebn0_db,snr_db,blocks,bit_errors,block_errors,ber,bler,avg_spa_iters");
    assert_eq!(lines.len(), 10);
    assert!(lines[1].starts_with("3.4900000000000002e0,"));
    let record = std::fs::read_to_string(format!("{}.run.json", s(&out))).unwrap();
    assert!(record.contains("\"seeds\""));
}

#[test]
fn eval_is_deterministic_across_shard_counts() {
    let a = tmp("det_a.csv");
    let b = tmp("det_b.csv");
    for (p, shards) in [(&a, "1"), (&b, "3")] {
        let o = run(&[
            "eval", "--system", "qam", "--mod", "64", "--ebn0", "6.0:0.5:7.0", "--seed", "3",
            "--max-blocks", "24", "--min-block-errors", "5", "--shards", shards, "--out", s(p),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn eval_from_config_file() {
    let cfg = tmp("sim.json");
    std::fs::write(
        &cfg,
        r#"{"system": "qam", "M": 4, "ebn0_db": [8.0], "max_blocks": 3, "seed": 1}"#,
    )
    .unwrap();
    let out = tmp("sim.csv");
    let o = run(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",3,0,0,"));
}

#[test]
fn self_checks_pass() {
    let o = run(&["gradcheck"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches(" ok").count(), 4);
    let o = run(&["ldpc-selftest"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("1000/1000"));
}

#[test]
fn usage_and_contract_errors_exit_1() {
    let o = run(&["eval", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let out = tmp("never.csv");
    let o = run(&["eval", "--system", "qam", "--mod", "8", "--ebn0", "1", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval", "--system", "qam", "--mod", "16", "--ebn0", "3:1:2", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
    let o = run(&["eval", "--system", "dnn", "--mod", "16", "--ebn0", "3", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn io_errors_exit_2() {
    let o = run(&["train", "--config", "/nonexistent/cfg.json", "--out", s(&tmp("x.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "eval", "--system", "dnn", "--checkpoint", "/nonexistent/ck.json", "--mod", "16", "--ebn0", "3",
        "--seed", "1", "--out", s(&tmp("y.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["uncoded", "--mod", "4", "--ebn0", "3", "--symbols", "10", "--seed", "1", "--out", "/nonexistent/dir/u.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constellation_and_plot() {
    let c = tmp("c16.csv");
    let o = run(&["constellation", "--system", "qam", "--mod", "16", "--out", s(&c)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&c).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text.contains("\n0000,9.4868329805051377e-1,9.4868329805051377e-1\n"));
    let svg = tmp("c16.svg");
    assert!(run(&["plot", "--input", s(&c), "--out", s(&svg)]).status.success());
    assert_eq!(std::fs::read_to_string(&svg).unwrap().matches("class=\"point\"").count(), 16);

    let u = tmp("u4.csv");
    let o = run(&["uncoded", "--mod", "4", "--ebn0", "0:2:6", "--symbols", "20000", "--seed", "2", "--out", s(&u)]);
    assert!(o.status.success());
    let ber = tmp("u4.svg");
    assert!(run(&["plot", "--input", s(&u), "--input", s(&u), "--out", s(&ber)]).status.success());
    assert_eq!(std::fs::read_to_string(&ber).unwrap().matches("<polyline").count(), 4);

    let empty = tmp("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let never = tmp("never.svg");
    let o = run(&["plot", "--input", s(&empty), "--out", s(&never)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!never.exists());
}

#[test]
fn train_then_evaluate_small_model() {
    let cfg = tmp("smoke.json");
    std::fs::write(
        &cfg,
        r#"{
  "M": 4,
  "enc_hidden": [4, 8],
  "stage1": {"dec_hidden": [8], "batch_size": 64, "samples_per_epoch": 256, "max_epochs": 2,
             "patience": 5, "optimizer": "adamw", "weight_decay": 0.01},
  "stage2": {"dec_hidden": [16], "batch_size": 128, "samples_per_epoch": 256, "max_epochs": 2,
             "patience": 5, "optimizer": "adam"},
  "train_snr_db": 5.0,
  "lr_max": 0.01,
  "lr_min": 0.001,
  "validation_symbols": 400,
  "seed": 4
}"#,
    )
    .unwrap();
    let ck = tmp("smoke_ck.json");
    let log = tmp("smoke_log.csv");
    let o = run(&["train", "--config", s(&cfg), "--out", s(&ck), "--log", s(&log), "--quiet"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 5);

    let s1 = tmp("smoke_s1.json");
    assert!(run(&["train", "--config", s(&cfg), "--out", s(&s1), "--stage", "1", "--quiet"]).status.success());
    let s2 = tmp("smoke_s2.json");
    let o = run(&["train", "--config", s(&cfg), "--out", s(&s2), "--stage", "2", "--resume", s(&s1), "--quiet"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(&ck).unwrap(), std::fs::read(&s2).unwrap());

    let out = tmp("smoke_eval.csv");
    let o = run(&[
        "eval", "--system", "dnn", "--checkpoint", s(&ck), "--mod", "4", "--ebn0", "30", "--seed", "1",
        "--max-blocks", "2", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&[
        "eval", "--system", "dnn", "--checkpoint", s(&ck), "--mod", "16", "--ebn0", "30", "--seed", "1",
        "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["gmi", "--system", "dnn", "--checkpoint", s(&ck), "--mod", "4", "--snr", "5", "--symbols", "2000", "--seed", "1"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("bce_bound"));
}
