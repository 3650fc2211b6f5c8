use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use h2m_core::mcmc::{ChainDraws, DrawBlock, DrawFormat, Variant};
use serde_json::Value;
use tempfile::TempDir;

fn h2m(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_h2m"))
        .args(args)
        .env("H2M_LOG", "error")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error report is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[data]
pollutants = ["p1", "p2"]

[model]
variant = "H2Mjoint"
knots = { time = 3, temperature = 0, humidity = 0 }
overdispersion = false

[mcmc]
burn_in = 150
retained = 150
adapt_window = 25
seed = 9

[simulation]
n_days = 80
beta = [0.2, -0.1]
correlation = [[1.0, 0.4], [0.4, 1.0]]
replicates = 2

[study]
variants = ["ME"]
burn_in = 100
retained = 100
chains = 2
"#;

fn small_config(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn missing_dataset_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = h2m(&["fit", "--data", "/definitely/not/here.csv", "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["code"], "IO");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[model]\nknot_count = 4\n").unwrap();
    let out = h2m(&["simulate", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["code"], "InvalidConfig");
}

#[test]
fn simulate_is_repeatable_and_complete() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = h2m(&["simulate", "--config", path(&cfg), "--out", path(dir)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["data.csv", "latent.csv", "truth.json", "manifest.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read(a.join("data.csv")).unwrap(), fs::read(b.join("data.csv")).unwrap());
    let data = fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(data.lines().count(), 81);
    assert!(data.lines().next().unwrap().contains("p2"));

    let other = tmp.path().join("c");
    h2m(&["simulate", "--config", path(&cfg), "--out", path(&other), "--seed", "5"]);
    assert_ne!(fs::read(a.join("data.csv")).unwrap(), fs::read(other.join("data.csv")).unwrap());
}

#[test]
fn fit_writes_summaries_and_diagnose_reads_them() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let sim = tmp.path().join("sim");
    assert!(h2m(&["simulate", "--config", path(&cfg), "--out", path(&sim)]).status.success());
    let fit = tmp.path().join("fit");
    let out = h2m(&[
        "fit",
        "--config",
        path(&cfg),
        "--data",
        path(&sim.join("data.csv")),
        "--out",
        path(&fit),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "descriptives.csv",
        "summary.json",
        "effects.csv",
        "variance.csv",
        "parameters.csv",
        "dic.json",
        "latent.csv",
        "manifest.json",
    ] {
        assert!(fit.join(f).is_file(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(fit.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["data_hash"].is_string());
    let effects = fs::read_to_string(fit.join("effects.csv")).unwrap();
    assert_eq!(effects.lines().count(), 3);

    let report_dir = tmp.path().join("report");
    let out = h2m(&["diagnose", path(&fit), "--out", path(&report_dir)]);
    assert!(matches!(out.status.code(), Some(0) | Some(3)));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("parameter"));
    assert!(report_dir.join("convergence.json").is_file());
}

fn write_chain(dir: &Path, chain: usize, values: impl Fn(usize) -> f64) {
    let mut block = DrawBlock::new("beta", vec!["x".into()]);
    for i in 0..400 {
        block.push_row(&[values(i)]);
    }
    let draws = ChainDraws {
        chain,
        variant: Variant::Me,
        seed_path: format!("test/{chain}"),
        blocks: vec![block],
        acceptance: Default::default(),
        health_days: Vec::new(),
        eta_mean: Vec::new(),
        latent_mean: Vec::new(),
        latent_sd: Vec::new(),
        n_days: 0,
    };
    draws.write_dir(dir, DrawFormat::Csv).unwrap();
}

#[test]
fn diagnose_needs_two_chains() {
    let tmp = TempDir::new().unwrap();
    write_chain(tmp.path(), 0, |i| (i as f64 * 0.7).sin());
    let out = h2m(&["diagnose", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["code"], "TooFewChains");
}

#[test]
fn separated_chains_fail_the_diagnostic() {
    let tmp = TempDir::new().unwrap();
    write_chain(tmp.path(), 0, |i| (i as f64 * 0.7).sin());
    write_chain(tmp.path(), 1, |i| 5.0 + (i as f64 * 0.9).cos());
    let out = h2m(&["diagnose", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("beta"));
}

#[test]
fn study_runs_a_variant_subset_and_resumes() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let dir = tmp.path().join("study");
    let first = h2m(&["study", "--config", path(&cfg), "--out", path(&dir)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let csv = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "metric,coefficient,ME");
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    assert!(dir.join("replicates/replicate_0001.json").is_file());

    let again = h2m(&["study", "--config", path(&cfg), "--out", path(&dir)]);
    assert!(again.status.success());
    assert_eq!(fs::read_to_string(dir.join("metrics.csv")).unwrap(), csv);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["details"]["resumed"], 2);

    let changed = h2m(&["study", "--config", path(&cfg), "--out", path(&dir), "--seed", "77"]);
    assert_eq!(changed.status.code(), Some(2));
    assert_eq!(stderr_json(&changed)["error"]["code"], "InvalidConfig");
}
