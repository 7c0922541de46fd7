use std::process::Command;

use tempfile::TempDir;

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fbf-bench"))
}

#[test]
fn list_problems_prints_registry() {
    let out = bench().arg("list-problems").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["polytope5", "fractional5", "plane3", "scalar-exp", "scalar-exp-strong"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run").display().to_string();
    let ok = bench()
        .args(["solve", "--problem", "polytope5", "--lambda", "0.5/L", "--out", &out])
        .status()
        .unwrap();
    assert_eq!(ok.code(), Some(0));
    assert!(dir.path().join("run_trace.csv").exists());
    assert!(dir.path().join("run_report.json").exists());

    let capped = bench()
        .args(["solve", "--problem", "polytope5", "--max-iter", "3", "--out", &out])
        .status()
        .unwrap();
    assert_eq!(capped.code(), Some(2));

    let unknown = bench().args(["solve", "--problem", "nope", "--out", &out]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("polytope5"));

    let large = bench()
        .args(["solve", "--problem", "plane3", "--lambda", "2/L", "--out", &out])
        .status()
        .unwrap();
    assert_eq!(large.code(), Some(1));
}

#[test]
fn solve_from_config_then_certify() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("cfg").display().to_string();
    let config = dir.path().join("run.json");
    let json = format!(
        r#"{{"problem": "plane3", "solver": {{"lambda": "0.8/L", "rho": 0.9}}, "output": {}}}"#,
        serde_json::to_string(&out).unwrap()
    );
    std::fs::write(&config, json).unwrap();
    let status = bench().arg("solve").arg("--config").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let cert = bench()
        .args(["certify", "--problem", "plane3", "--trace"])
        .arg(dir.path().join("cfg_trace.csv"))
        .output()
        .unwrap();
    assert!(cert.status.success());
    let value: serde_json::Value = serde_json::from_slice(&cert.stdout).unwrap();
    assert_eq!(value["certificate"]["key_inequality_violations"], 0);
    assert_eq!(value["certificate"]["fejer_violations"], 0);
}

#[test]
fn malformed_config_is_invalid() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"problem": "plane3", "output": "x", "colour": 1}"#).unwrap();
    let status = bench().arg("solve").arg("--config").arg(&config).status().unwrap();
    assert_eq!(status.code(), Some(1));
}
