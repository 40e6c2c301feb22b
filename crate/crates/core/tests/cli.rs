use std::fs;
use std::process::Command;

fn seacap() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_seacap"));
    c.env("SEACAP_WORKERS", "2");
    c
}

#[test]
fn run_preset_writes_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = seacap()
        .args([
            "run",
            "--preset",
            "B",
            "--seeds",
            "1,2",
            "--episodes",
            "3",
            "--horizon",
            "10",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().nth(1).unwrap().starts_with("B,2,3,"));
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
}

#[test]
fn run_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"preset": "C", "run_id": "fair", "run": {"episodes": 2, "horizon": 8, "seeds": [9],
            "fairness": {"mode": "maxmin", "weight": 0.5, "delta_threshold": 0.0}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = seacap()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("fair,9,0,"));
}

#[test]
fn bad_inputs_exit_with_error() {
    let out = seacap().args(["run", "--preset", "Z"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"preset": "A", "surprise": true}"#).unwrap();
    let out = seacap()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));
    let out = seacap().args(["run"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn oracle_check_passes() {
    let out = seacap().arg("oracle-check").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 23);
}

#[test]
fn gradcheck_detects_fault() {
    let ok = seacap()
        .args(["gradcheck", "--batches", "2", "--params", "20"])
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = seacap()
        .args([
            "gradcheck",
            "--batches",
            "2",
            "--params",
            "20",
            "--fault-scale",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
