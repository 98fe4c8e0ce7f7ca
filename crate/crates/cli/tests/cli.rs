use std::fs;
use std::process::Command;

const LINEAR: &str = r#"
eps = 1e-10
window = 100
train_span = [0.0, 1.0]
predict_span = [0.0, 1.0]
sample_every = 100
strategies = ["standard", "time_varying"]

[solver]
kind = "linear"
"#;

fn ldmd() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ldmd"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn errors_verb_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("linear.toml");
    fs::write(&cfg, LINEAR).unwrap();
    let out = dir.path().join("out");
    let status = ldmd().args(["errors", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 2 * 11);
    assert!(out.join("provenance.json").exists());
}

#[test]
fn solve_and_predict_verbs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("linear.toml");
    fs::write(&cfg, LINEAR).unwrap();
    let status = ldmd().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let snaps = ldmd::snapshots::SnapshotSet::load(dir.path().join("snapshots.dmds")).unwrap();
    assert_eq!((snaps.dim(), snaps.len()), (2, 1001));
    let status = ldmd().args(["predict", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let pred = fs::read_to_string(dir.path().join("prediction_time_varying.csv")).unwrap();
    assert_eq!(pred.lines().next(), Some("t,c0,c1"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, LINEAR.replace("eps = 1e-10", "eps = 3.0")).unwrap();
    let out = dir.path().join("out");
    let status = ldmd().args(["errors", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
    assert_eq!(ldmd().arg("fit").status().unwrap().code(), Some(2));
    let status = ldmd().args(["bounds", "--sizes", "60", "--random-only"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn bounds_verb_reports_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let status = ldmd()
        .args(["bounds", "--seeds", "2", "--sizes", "2,3", "--rows", "6", "--random-only", "--seed", "9", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(ldmd::bounds::REPORT_CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 5);
}

#[test]
fn unknown_figure_is_rejected_by_the_parser() {
    let status = ldmd().args(["reproduce", "no-such-figure"]).status().unwrap();
    assert_eq!(status.code(), Some(2));
}
