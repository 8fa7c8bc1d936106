use std::path::Path;
use std::process::{Command, Output};

use gcs_core::io::{read_results, EvalPath};

const SMOKE: &str = include_str!("../../../configs/smoke.toml");

fn gcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcs")).args(args).env("RUST_LOG", "warn").output().expect("spawn gcs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn dry_run_reports_seed_and_hash_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("out");
    let o = gcs(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "11", "--dry-run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("seed 11"), "{stdout}");
    assert!(stdout.contains("hash "), "{stdout}");
    assert!(!out.exists());
}

#[test]
fn missing_chi_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[channel]\nkind = \"nlin\"\n");
    let out = dir.path().join("out");
    let o = gcs(&["evaluate", "--config", &cfg, "--out", out.to_str().unwrap(), "--qam", "16"]);
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("chi"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMOKE}\nbogus = 1\n"));
    let o = gcs(&["train", "--config", &cfg, "--dry-run"]);
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    let line = SMOKE.lines().count() + 2;
    assert!(stderr.contains(&format!("cfg.toml:{line}: unknown field `bogus`")), "{stderr}");
}

#[test]
fn duplicate_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let o = gcs(&["evaluate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap(), "--qam", "16", "--qam", "16"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate"));
}

#[test]
fn bad_constellation_file_is_reported_but_others_are_evaluated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "label bad\n1.0 oops\n").unwrap();
    let out = dir.path().join("o");
    let o = gcs(&["evaluate", "--config", &cfg, "--out", out.to_str().unwrap(), "--qam", "16", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("bad.txt"), "{stderr}");
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.label == "qam16"));
}

#[test]
fn qam64_over_the_default_sweep_is_unimodal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = gcs(&["evaluate", "--out", out.to_str().unwrap(), "--qam", "64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.path == EvalPath::Model && r.order == 64 && r.source == "qam"));
    let mi: Vec<f64> = rows.iter().map(|r| r.mi_bits_4d).collect();
    let peak = mi.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(peak > 0 && peak < 10, "peak at the edge of the sweep: {mi:?}");
    assert!(mi[..=peak].windows(2).all(|w| w[1] > w[0]), "{mi:?}");
    assert!(mi[peak..].windows(2).all(|w| w[1] < w[0]), "{mi:?}");
    let manifest = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("results.csv"));
}

#[test]
fn trained_constellations_feed_evaluate_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let t = dir.path().join("t");
    let o = gcs(&["train", "--config", &cfg, "--out", t.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trained = read_results(&t.join("results.csv")).unwrap();
    assert_eq!(trained.len(), 2);

    let files: Vec<String> = trained.iter().map(|r| t.join(&r.label).join("constellation.txt").display().to_string()).collect();
    let e = dir.path().join("e");
    let mut args = vec!["evaluate", "--config", &cfg, "--out", e.to_str().unwrap(), "--qam", "16"];
    args.extend(files.iter().map(String::as_str));
    let o = gcs(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let evaluated = read_results(&e.join("results.csv")).unwrap();
    assert_eq!(evaluated.len(), 6);
    // re-evaluating a trained point at its own power reproduces the training-time MI
    for r in &trained {
        let again = evaluated.iter().find(|x| x.label == r.label && x.power_dbm == r.power_dbm).unwrap();
        assert_eq!(again.mi_bits_4d, r.mi_bits_4d);
    }

    let f = dir.path().join("f");
    let o = gcs(&["figures", "--config", &cfg, "--out", f.to_str().unwrap(), e.join("results.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gains = std::fs::read_to_string(f.join("fig3_gain_vs_power.csv")).unwrap();
    assert_eq!(gains.lines().count(), 1 + 4);
}

#[test]
fn ssf_validate_writes_paired_rows_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMOKE);
    let out = dir.path().join("s");
    let o = gcs(&[
        "ssf-validate", "--config", &cfg, "--out", out.to_str().unwrap(), "--qam", "16", "--calibrate-dbm", "-2",
        "--dump-symbols",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_results(&out.join("results.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    for r in rows.iter().filter(|r| r.path == EvalPath::Ssf) {
        let model = rows.iter().find(|m| m.path == EvalPath::Model && m.power_dbm == r.power_dbm).unwrap();
        let delta = r.mi_delta_vs_model.expect("ssf rows carry the model delta");
        assert!((delta - (r.mi_bits_4d - model.mi_bits_4d)).abs() < 1e-12);
        assert!(delta.abs() < 0.3, "{delta}");
    }
    assert!(out.join("calibration.toml").exists());
    let dumps = std::fs::read_dir(out.join("symbols")).unwrap().count();
    assert_eq!(dumps, 2);
}

#[test]
fn zero_jobs_is_an_error() {
    let o = gcs(&["evaluate", "--qam", "16", "--jobs", "0"]);
    assert!(!o.status.success());
}
