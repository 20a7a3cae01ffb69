use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sessa_core::tasks::DiffuseMqarConfig;
use sessa_core::train::{MixerKind, TaskConfig, TrainConfig};

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sessa-lab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("SESSA_LAB_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn poly_decay_suite_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["theory", "poly_decay", "--gamma", "0.5", "--T", "4096", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(header(&dir.path().join("poly_decay.csv")), "lag,value,envelope,violated");
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["status"], "pass");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["command"], "theory");
    assert_eq!(m["config"]["suite"], "poly_decay");
    assert_eq!(m["config"]["t_len"], 4096);
    assert!(m["versions"]["sessa-core"].is_string());
    assert!(m["argv"].as_array().unwrap().iter().any(|a| a == "poly_decay"));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["violations"], 0);
}

#[test]
fn every_theory_suite_passes_on_defaults() {
    for suite in ["impulse", "closed_form", "two_sided", "transport", "path_sum", "positional_code"] {
        let dir = tempfile::tempdir().unwrap();
        let out = lab(dir.path(), &["theory", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join(format!("{suite}.csv")).exists());
    }
}

#[test]
fn out_of_domain_gain_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["theory", "closed_form", "--gamma", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
    let m = json(&dir.path().join("manifest.json"));
    assert!(m["status"].as_str().unwrap().starts_with("error"));
}

#[test]
fn bad_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(dir.path(), &["theory", "nope"]).status.code(), Some(2));
    assert_eq!(lab(dir.path(), &["compare", "lti", "--rho", "abc"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_sessa-lab"))
        .args(["theory", "impulse", "--out"])
        .arg(dir.path())
        .env("SESSA_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["theory", "impulse", "--gamma", "0.5", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL"));
    assert_eq!(json(&dir.path().join("manifest.json"))["status"], "fail");
    assert_eq!(json(&dir.path().join("summary.json"))["passed"], false);
}

#[test]
fn transport_reports_frozen_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["theory", "transport", "--k", "2", "--beta", "0.5", "--H", "512"]);
    assert_eq!(out.status.code(), Some(0));
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["nu"], 0.0);
    assert_eq!(s["profile"], "frozen");
    assert!(s["fitted_nu"].as_f64().unwrap().abs() <= 0.05);
    assert_eq!(header(&dir.path().join("transport.csv")), "lag,signal,margin,margin_floor");
}

#[test]
fn comparator_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["compare", "attention", "--T", "1024", "--diffuse"]);
    assert_eq!(out.status.code(), Some(0));
    let e = json(&dir.path().join("summary.json"))["fitted_exponent"].as_f64().unwrap();
    assert!((e + 1.0).abs() <= 0.02, "{e}");

    let out = lab(dir.path(), &["compare", "mamba", "--cdelta", "0.2", "--lambda", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&dir.path().join("summary.json"))["fitted_rate"].as_f64().unwrap();
    assert!((r / -0.2 - 1.0).abs() <= 0.05, "{r}");

    let out = lab(dir.path(), &["compare", "lti", "--rho", "0.9"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = fs::read_to_string(dir.path().join("lti.csv")).unwrap();
    assert_eq!(rows.lines().count(), 202);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let out = lab(dir.path(), &["compare", "attention", "--T", "200", "--seed", seed]);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(dir.path().join("attention.csv")).unwrap(), fs::read(dir.path().join("manifest.json")).unwrap())
    };
    let (a, ma) = run("3");
    let (b, _) = run("3");
    let (c, _) = run("4");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(!ma.is_empty());
}

#[test]
fn json_format_writes_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["theory", "convolution", "--k", "2", "--beta", "0.5", "--T", "512", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&dir.path().join("convolution.json"));
    assert_eq!(rows.as_array().unwrap().len(), 513);
    assert_eq!(rows[2]["value"], 1.0);
}

#[test]
fn jacobian_probe_stays_under_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(dir.path(), &["jacobian", "--T", "64", "--samples", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("jacobian.csv");
    assert_eq!(header(&path), "t,tau,lag,norm,envelope,ok");
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 1 + 2 * 63);
    assert_eq!(json(&dir.path().join("summary.json"))["violations"], 0);
    assert_eq!(lab(dir.path(), &["jacobian", "--gain", "1.2"]).status.code(), Some(2));
}

fn tiny_config() -> TrainConfig {
    TrainConfig {
        task: TaskConfig::Mqar(DiffuseMqarConfig {
            vocab_size: 24,
            seq_len: 56,
            key_len: 2,
            n_pairs: 2,
            n_distractors: 1,
            noise_len: 0,
            distractor_shared_prefix_len: 1,
            train_max_lag: 12,
            test_lag_multiplier: 4,
            seed: 3,
        }),
        mixer_kind: MixerKind::Sessa,
        depth: 1,
        d_model: 16,
        d_k: 4,
        steps: 6,
        batch: 3,
        eval_every: 2,
        eval_samples: 4,
        lr: 1e-2,
        ..Default::default()
    }
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.json");
    fs::write(&cfg_path, serde_json::to_string(&tiny_config()).unwrap()).unwrap();
    let run = dir.path().join("run");
    let out = lab(&run, &["train", "--config", cfg_path.to_str().unwrap(), "--mixer", "sessa_no_feedback"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("step,split,loss,accuracy"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 4);
    let m = json(&run.join("manifest.json"));
    assert_eq!(m["seed"], 0);
    assert_eq!(json(&run.join("config.json"))["mixer_kind"], "sessa_no_feedback");

    let again = dir.path().join("again");
    lab(&again, &["train", "--config", cfg_path.to_str().unwrap(), "--mixer", "sessa_no_feedback"]);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(run.join("checkpoint.bin")).unwrap(), fs::read(again.join("checkpoint.bin")).unwrap());

    let ckpt = run.join("checkpoint.bin");
    let ev = dir.path().join("eval");
    let out = lab(&ev, &["eval", "--ckpt", ckpt.to_str().unwrap(), "--task", "mqar", "--split", "test"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let row = fs::read_to_string(ev.join("eval.csv")).unwrap();
    let last_test = metrics.lines().last().unwrap();
    assert_eq!(row.lines().nth(1), Some(last_test));

    let out = lab(&ev, &["eval", "--ckpt", ckpt.to_str().unwrap(), "--task", "symbolsoup"]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.bin");
    fs::write(&bad, b"not a checkpoint").unwrap();
    let out = lab(&ev, &["eval", "--ckpt", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.json");
    fs::write(&cfg_path, serde_json::to_string(&TrainConfig { steps: 2, ..tiny_config() }).unwrap()).unwrap();
    let out = lab(dir.path(), &["train", "--config", cfg_path.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = json(&dir.path().join("config.json"));
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["task"]["seed"], 9);
    assert_eq!(json(&dir.path().join("manifest.json"))["seed"], 9);
}

#[test]
fn unmatched_parameter_budget_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("tiny.json");
    fs::write(&cfg_path, serde_json::to_string(&tiny_config()).unwrap()).unwrap();
    let out = lab(dir.path(), &["train", "--config", cfg_path.to_str().unwrap(), "--d-model", "4", "--d-k", "32"]);
    assert_eq!(out.status.code(), Some(2));
}
