use std::path::Path;
use std::process::{Command, Output};

fn qsmooth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsmooth"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const SHORT: &str = r#"{"t1": 1.0, "drive": {"n_impulses": 1, "w": 0.1}}"#;

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("out");
    let res = qsmooth(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "trajectories.csv",
        "record.csv",
        "detections.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let record = std::fs::read_to_string(out.join("record.csv")).unwrap();
    assert!(record.starts_with("t,dI,dW_true\n"));
    assert_eq!(record.lines().count(), 1001);
}

#[test]
fn validation_errors_exit_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kappa": -1.0}"#);
    let res = qsmooth(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let res = qsmooth(&[
        "sweep",
        "--axes",
        "nope=1",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn numerical_instability_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"t1": 1.0, "dt": 0.05, "n_bar_F": 50000}"#);
    let res = qsmooth(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn sweep_and_roc_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let out = dir.path().join("sweep");
    let res = qsmooth(&[
        "sweep",
        "--config",
        &cfg,
        "--axes",
        "kappa=0.1,1;s=20,50",
        "--runs",
        "2",
        "--workers",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "kappa,s,metric,value,N,failure");
    assert_eq!(lines.count(), 8);

    let out = dir.path().join("roc");
    let res = qsmooth(&[
        "roc",
        "--config",
        &cfg,
        "--alphas",
        "0,0.5,1",
        "--runs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = std::fs::read_to_string(out.join("roc.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}
