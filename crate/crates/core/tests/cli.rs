use std::path::Path;
use std::process::Command;

use phi43::report::Report;

fn phi43(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phi43"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "grid": { "n": 8, "L": 2.0 },
    "model": { "lambda": 0.0 },
    "cutoffs": { "M": 1, "N": 1, "schedule": [1] },
    "sampling": { "samples": 4000 }
}"#;

#[test]
fn free_field_suite_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = phi43(&["free-field", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("free-field"));
    let report: Report = serde_json::from_str(&std::fs::read_to_string(out.join("free-field.json")).unwrap()).unwrap();
    assert!(report.pass);
    assert_eq!(report.config.seed, 3);
    assert_eq!(report.config.grid.n, 8);
    assert!(out.join("summary.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let read = || {
        let o = phi43(&["free-field", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
        assert!(o.status.success());
        std::fs::read(out.join("free-field.json")).unwrap()
    };
    let first = read();
    assert_eq!(first, read());
}

#[test]
fn invalid_configs_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        r#"{ "grid": { "n": 8, "L": 2.0 }, "cutoffs": { "M": 2 } }"#,
        r#"{ "model": { "lambda": -1.0 } }"#,
        r#"{ "grid": { "size": 8 } }"#,
        "not json",
    ] {
        let cfg = write_config(dir.path(), body);
        let o = phi43(&["free-field", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
}

#[test]
fn help_documents_artifacts() {
    let o = phi43(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for needle in ["stationarity.csv", "t,id,value,replica", "oracle-compare", "--seed"] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
