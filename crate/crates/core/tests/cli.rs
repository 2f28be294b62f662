//! End-to-end runs of the `levy-lorentz` binary on the smoke configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use levy_lorentz::experiment::ExperimentConfig;
use tempfile::TempDir;

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy-lorentz")).args(args).output().expect("binary runs")
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = cli(&args);
    assert!(
        o.status.code().is_some(),
        "killed by signal: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

/// Every output file except the timing record, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for sub in ["", "samples"] {
        for e in fs::read_dir(dir.join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() && p.file_name().unwrap() != "timing.json" {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn csv_only(snap: &BTreeMap<String, Vec<u8>>) -> BTreeMap<String, Vec<u8>> {
    snap.iter().filter(|(k, _)| k.ends_with(".csv")).map(|(k, v)| (k.clone(), v.clone())).collect()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn simulate_writes_every_output() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("simulate", &smoke_config(), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "timing.json", "quantiles.csv", "fits.csv", "kstests.csv"] {
        assert!(tmp.path().join(f).is_file(), "missing {f}");
    }
    for t in ["s", "y", "t", "scenery", "range", "self_intersection", "site_power_half", "bond_deviation", "x", "x_bar"] {
        assert!(tmp.path().join("samples").join(format!("{t}.csv")).is_file(), "missing sample table {t}");
    }
    let quantiles = fs::read_to_string(tmp.path().join("quantiles.csv")).unwrap();
    assert!(quantiles.starts_with("quantity,scale,time_point,quantile_level,value"));
    let ks = fs::read_to_string(tmp.path().join("kstests.csv")).unwrap();
    assert!(ks.starts_with("name,D,n_a,n_b,p,threshold"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("simulate", &smoke_config(), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let first = snapshot(tmp.path());
    let o = run_in("simulate", &smoke_config(), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(first, snapshot(tmp.path()));
}

#[test]
fn worker_count_does_not_change_outputs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for cmd in ["simulate", "limit-sample"] {
        assert_eq!(run_in(cmd, &smoke_config(), a.path(), &["--workers", "1"]).status.code(), Some(0));
        assert_eq!(run_in(cmd, &smoke_config(), b.path(), &["--workers", "4"]).status.code(), Some(0));
        assert_eq!(csv_only(&snapshot(a.path())), csv_only(&snapshot(b.path())), "{cmd}");
    }
}

#[test]
fn seed_override_changes_samples_and_is_recorded() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    assert_eq!(run_in("simulate", &smoke_config(), a.path(), &[]).status.code(), Some(0));
    assert_eq!(run_in("simulate", &smoke_config(), b.path(), &["--seed", "7"]).status.code(), Some(0));
    let read = |d: &Path| fs::read(d.join("samples/y.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(b.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["master_seed"], 7);
}

#[test]
fn manifest_echoes_the_effective_config() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_in("simulate", &smoke_config(), tmp.path(), &["--workers", "2"]).status.code(), Some(0));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    let echoed: ExperimentConfig = serde_json::from_value(m["config"].clone()).unwrap();
    let mut expected = ExperimentConfig::load(&smoke_config()).unwrap();
    expected.workers = 2;
    expected.output_dir = tmp.path().to_path_buf();
    assert_eq!(echoed, expected);
    assert_eq!(m["command"], "simulate");
    assert!(m.get("wall_clock_seconds").is_none());
}

#[test]
fn invalid_configs_exit_with_status_two() {
    let tmp = TempDir::new().unwrap();
    let cases = [
        ("alpha = 1.5\n", "alpha"),
        ("n_trajectories = 0\n", "n_trajectories"),
        ("scales = []\n", "scales"),
        ("no_such_key = 1\n", "no_such_key"),
    ];
    for (body, field) in cases {
        let cfg = write_config(tmp.path(), body);
        let o = run_in("simulate", &cfg, &tmp.path().join("out"), &[]);
        assert_eq!(o.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(field), "stderr for {body:?} does not name {field}: {err}");
    }
    let o = run_in("simulate", &tmp.path().join("missing.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_checks_only_change_status_under_assert() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "calibration_samples = 1000\ncalibration_ceiling = 0.0001\n");
    let out = tmp.path().join("out");
    let o = run_in("calibrate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(run_in("calibrate", &cfg, &out, &["--assert"]).status.code(), Some(3));
}

#[test]
fn analyze_without_samples_fails() {
    let tmp = TempDir::new().unwrap();
    fs::create_dir_all(tmp.path().join("samples")).unwrap();
    let o = run_in("analyze", &smoke_config(), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_reproduces_simulate_tables() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(run_in("simulate", &smoke_config(), tmp.path(), &[]).status.code(), Some(0));
    let before = fs::read(tmp.path().join("quantiles.csv")).unwrap();
    let fits = fs::read(tmp.path().join("fits.csv")).unwrap();
    assert_eq!(run_in("analyze", &smoke_config(), tmp.path(), &[]).status.code(), Some(0));
    assert_eq!(before, fs::read(tmp.path().join("quantiles.csv")).unwrap());
    assert_eq!(fits, fs::read(tmp.path().join("fits.csv")).unwrap());
}

#[test]
fn verify_passes_on_smoke_config() {
    let tmp = TempDir::new().unwrap();
    let o = run_in("verify", &smoke_config(), tmp.path(), &["--assert"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(tmp.path().join("samples/identity_error.csv").is_file());
}
