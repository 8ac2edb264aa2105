//! End-to-end CLI checks, including byte-identical CSV for a fixed seed.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_knockoffs"))
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("knockoffs-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn bench_is_byte_identical_for_identical_seed_and_config() {
    let cfg = write_config(
        "bench.json",
        r#"{"model": {"kind": "discrete-chain", "p": 5, "k": 3, "alpha": 0.3},
            "proposal": {"kind": "mtm", "m": 2},
            "forward": {"pilot_n": 500},
            "bench": {"m": [1, 2], "replicates": 40}}"#,
    );
    let run = || {
        let out = bin()
            .args(["bench", "--config", cfg.to_str().unwrap(), "--seed", "9"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let (a, b) = (run(), run());
    assert!(!a.is_empty());
    assert_eq!(a, b, "bench CSV differs between identical runs");
}

#[test]
fn sample_emits_expected_columns() {
    let cfg = write_config(
        "sample.json",
        r#"{"model": {"kind": "discrete-chain", "p": 3, "k": 2, "alpha": 0.2},
            "sampler": {"kind": "discrete-exact"}}"#,
    );
    let out = bin()
        .args([
            "sample",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "4",
            "--replicates",
            "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "replicate,coordinate,x,x_tilde,accepted,queries_this_step"
    );
    assert_eq!(text.lines().count(), 1 + 5 * 3);
}

#[test]
fn order_prints_the_chain_ordering() {
    let cfg = write_config(
        "order.json",
        r#"{"model": {"kind": "gaussian-chain", "p": 4, "rho": 0.5}}"#,
    );
    let out = bin()
        .args(["order", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("step,variable_id,node_size,width\n"));
}

#[test]
fn validate_reports_pass_lines() {
    let cfg = write_config(
        "validate.json",
        r#"{"model": {"kind": "ising", "d1": 2, "d2": 2, "beta0": 0.2},
            "sampler": {"kind": "discrete-exact"},
            "forward": {"burn_in": 200, "thin": 2}}"#,
    );
    let out = bin()
        .args(["validate", "--config", cfg.to_str().unwrap(), "--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS: exchangeability-enumeration"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn missing_config_is_a_clean_error() {
    let out = bin().args(["order"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("--config"));
}
