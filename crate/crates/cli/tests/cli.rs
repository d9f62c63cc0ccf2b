use std::process::{Command, Output};

fn dnest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dnest")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn regimes_prints_plan() {
    let out = dnest(&["regimes", "--m", "65536", "--n", "1", "--l", "4", "--r", "0.8"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["case"], "case1");
    assert_eq!(v["K"], 4);
    assert!(v["K0"].as_f64().unwrap() > 0.0);
    assert!(v["n_ess"].as_f64().unwrap() <= 65536.0);
}

#[test]
fn regimes_rejects_bad_input() {
    let out = dnest(&["regimes", "--m", "8", "--n", "1", "--l", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_dumps_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("t.bin");
    let out = dnest(&[
        "simulate", "--model", "poisson", "--m", "12", "--n", "3", "--l", "10", "--trials", "4", "--seed", "8",
        "--transcript", bin.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["transcript_bits"], 120);
    let bytes = std::fs::read(&bin).unwrap();
    assert_eq!(&bytes[..8], &[12, 0, 0, 0, 10, 0, 0, 0]);
    assert_eq!(bytes.len(), 8 + 12 * 2);
    let again = json(&dnest(&["simulate", "--model", "poisson", "--m", "12", "--n", "3", "--l", "10", "--trials", "4", "--seed", "8"]));
    assert_eq!(v["mean_mse"], again["mean_mse"]);
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "model = \"density\"\nr = 0.8\ntrials = 4\nmax_trials = 4\n[axes]\nm = [16, 64, 256, 1024]\nn = [4]\nl = [8]\n").unwrap();
    let csv = dir.path().join("s.csv");
    let out = dnest(&["sweep", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap(), "--seed", "2", "--threads", "1", "--fit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["rows"], 4);
    assert!(v["fit"]["slope"].is_number());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("m,n,l,r,case,n_ess,K,K0,inner_variant,trials,mean_mse,stderr,seed\n"));
    let out = dnest(&["plot", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("s_rate.svg").exists() && dir.path().join("s_bits.svg").exists());
}

#[test]
fn checks_set_exit_code() {
    let out = dnest(&["balls-bins", "--n", "64", "--k", "64", "--trials", "2000", "--c", "10,20"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["pass"], true);
    let out = dnest(&["verify-assumptions", "--model", "gaussian", "--k-grid", "8,16", "--samples", "20000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = dnest(&["inner-bench", "--variant", "random_partition", "--k", "16", "--m", "64", "--n", "2", "--l", "3", "--trials", "20"]);
    assert!(out.status.success());
    assert_eq!(json(&out)["budget_ok"], true);
}
