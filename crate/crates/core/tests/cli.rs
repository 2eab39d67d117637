use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ethqma(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ethqma"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ETHQMA_OUT_DIR")
        .output()
        .expect("spawn ethqma")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn self_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = ethqma(
        &["run", "--self-check", "--seed", "3", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 11);
    assert!(out.join("self_check.json").exists());
    assert!(out.join("gap").join("perron_report.json").exists());
}

#[test]
fn zero_f_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gap.json",
        r#"{"experiment": "gap", "seed": 1, "params": {"perron": {"f": 0.0}}}"#,
    );
    let r = ethqma(&["run", &cfg], tmp.path());
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
}

#[test]
fn unreadable_or_missing_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(ethqma(&["run", "nope.json"], tmp.path()).status.code(), Some(1));
    assert_eq!(ethqma(&["run"], tmp.path()).status.code(), Some(1));
    let bad = write_config(
        tmp.path(),
        "bad.json",
        "{\"experiment\": \"gap\", \"seed\": 1, \"x\": 2}",
    );
    assert_eq!(ethqma(&["run", &bad], tmp.path()).status.code(), Some(1));
}

#[test]
fn gap_config_writes_perron_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gap.json",
        r#"{"experiment": "gap", "seed": 5, "out_dir": "from-config",
            "params": {"perron": {"instances": 3, "D": 8},
                       "overlap": {"instances": 1, "D": 8},
                       "witness": {"ensembles": 1, "ensemble": {"D": 8, "m": 8, "f": 0.6,
                                   "f_mode": {"kind": "random-in-range"}, "mu_mode": {"kind": "jitter", "center": 0.0}, "seed": 0}}}}"#,
    );
    let r = ethqma(&["run", &cfg], tmp.path());
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
    let report = tmp.path().join("from-config").join("perron_report.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert!((v["lambda"].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let violations = fs::read_to_string(tmp.path().join("from-config").join("violations.json")).unwrap();
    assert_eq!(violations.trim(), "[]");
}

#[test]
fn out_flag_beats_environment_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        r#"{"experiment": "gaussnorm", "seed": 1, "out_dir": "cfg-dir", "params": {"samples": 2, "d_values": [4]}}"#,
    );
    let r = Command::new(env!("CARGO_BIN_EXE_ethqma"))
        .args(["run", &cfg])
        .current_dir(tmp.path())
        .env("ETHQMA_OUT_DIR", tmp.path().join("env-dir"))
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(0));
    assert!(tmp.path().join("env-dir").join("gaussnorm_report.json").exists());
    assert!(!tmp.path().join("cfg-dir").exists());

    let r = ethqma(&["run", &cfg, "--out", "flag-dir"], tmp.path());
    assert_eq!(r.status.code(), Some(0));
    assert!(tmp.path().join("flag-dir").join("gaussnorm_report.json").exists());
    assert!(!tmp.path().join("cfg-dir").exists());
}

#[test]
fn unmet_thresholds_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"experiment": "concentration", "seed": 9, "params": {
            "tensor": {"ensemble": {"D": 4, "m": 0, "f": 0.5, "f_mode": {"kind": "random-in-range"},
                                    "mu_mode": {"kind": "zero"}, "seed": 0},
                       "m_grid": [16, 64], "trials": 20, "ratio_range": [10.0, 20.0]},
            "effective": {"ensemble": {"D": 2, "m": 64, "f": 0.6, "f_mode": {"kind": "random-in-range"},
                                       "mu_mode": {"kind": "jitter", "center": 0.0}, "seed": 0},
                          "m_grid": [16, 64], "trials": 20, "seed_groups": 1, "eps": 0.1, "l": 64,
                          "stability": 0.5}}}"#,
    );
    let r = ethqma(&["run", &cfg, "--out", "o"], tmp.path());
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("criterion 10 FAIL"), "{stdout}");
    assert!(stdout.contains("tensorprodconcen.ratio"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o").join("violations.json")).unwrap()).unwrap();
    assert!(!v.as_array().unwrap().is_empty());
}
