//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landau-jko"))
        .args(args)
        .current_dir(cwd)
        .env("LANDAU_THREADS", "1")
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, "# two cheap steps\npreset = bkw2d_weak\nn = 64\nsteps = 2\nbatch_size = 16\nfirst.epochs = 2\nlater.epochs = 1\n").unwrap();
    let out = bin(&["run", "--config", "tiny.cfg", "deterministic=true", "--out", "r"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = dir.path().join("r");
    for f in ["config.txt", "manifest.json", "diagnostics.csv", "train_log.jsonl", "oracle_errors.csv", "checkpoints/ensemble_final.bin"] {
        assert!(r.join(f).exists(), "missing {f}");
    }
    let diag = std::fs::read_to_string(r.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4);
    let echoed = std::fs::read_to_string(r.join("config.txt")).unwrap();
    assert!(echoed.contains("n = 64"));
}

#[test]
fn bad_config_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["run", "--preset", "bkw2d_weak", "tua=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tua"));
    let out = bin(&["run", "--preset", "bkw2d_weak", "tau=-1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau"));
}

#[test]
fn check_verb_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["check"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn oracle_verbs_write_grids() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["oracle", "bkw", "--t", "0.5", "--points", "11", "--out", "bkw.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(dir.path().join("bkw.csv")).unwrap().lines().count(), 1 + 121);
    let out = bin(&["oracle", "covariance", "--p", "1.8,0.2", "--times", "0,0.1", "--out", "cov.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
