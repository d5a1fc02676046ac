use std::path::Path;
use std::process::{Command, Output};

fn tiltgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiltgp"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn quick<'a>(out: &'a Path, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--train_trajectory.duration=4.0",
        "--eval_trajectory.duration=2.0",
        "--gp.subsample=30",
        "--gp.restarts=2",
        "--evaluation.repeats=2",
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn all_then_report_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiltgp(&quick(dir.path(), &["all"]));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("attitude tracking"), "{stdout}");
    let snapshot = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(snapshot.contains("subsample = 30"));

    let before = std::fs::read(dir.path().join("reports/prediction.csv")).unwrap();
    let out = tiltgp(&quick(dir.path(), &["report"]));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(dir.path().join("reports/prediction.csv")).unwrap(), before);
}

#[test]
fn stepwise_matches_all() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(tiltgp(&quick(a.path(), &["all"])).status.code(), Some(0));
    for cmd in ["collect", "train", "evaluate"] {
        assert_eq!(tiltgp(&quick(b.path(), &[cmd])).status.code(), Some(0), "{cmd}");
    }
    for f in ["training_set.json", "model.json", "logs/on_01.csv", "reports/tracking.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let out = tiltgp(&["collect"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unknown_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiltgp(&quick(dir.path(), &["--gp.subsampel=4", "collect"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_subsample_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiltgp(&quick(dir.path(), &["--gp.subsample=100000", "collect"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_training_set_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiltgp(&quick(dir.path(), &["train"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn diverging_training_flight_exits_with_instability() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiltgp(&quick(dir.path(), &["--mismatch.torque_bias=[200.0, 0.0, 0.0]", "collect"]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn model_from_another_vehicle_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tiltgp(&quick(dir.path(), &["collect"])).status.code(), Some(0));
    assert_eq!(tiltgp(&quick(dir.path(), &["train"])).status.code(), Some(0));
    let out = tiltgp(&quick(dir.path(), &["--mismatch.seed=9", "evaluate"]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}

#[test]
fn config_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "seed = 8\n[gp]\nsubsample = 12\n[train_trajectory]\nduration = 3.0\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = tiltgp(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "collect"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snapshot = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 8"));
    assert!(snapshot.contains("subsample = 12"));
}

#[test]
fn shipped_default_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let cfg = tiltgp::harness::ExperimentConfig::from_toml_str(&text, &[]).unwrap();
    assert_eq!(cfg.gp.subsample, 100);
    assert_eq!(cfg.evaluation.repeats, 10);
}
