//! End-to-end tests of the binary surface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oscnf"))
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("oscnf-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn morris_config() -> PathBuf {
    write_config(
        "morris.json",
        r#"{"forcing": {"n": 2, "T": 1.0, "p": [{"j": 0, "cos": [1.0]}]}}"#,
    )
}

fn parse_csv(stdout: &str) -> (String, Vec<Vec<String>>) {
    let mut lines = stdout.lines();
    let hash_line = lines.next().unwrap().to_string();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    (format!("{hash_line}\n{header}"), rows)
}

#[test]
fn gentrig_n1_matches_sine() {
    let out = bin()
        .args(["gentrig", "--n", "1", "--samples", "64"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# config_sha256="));
    let (_, rows) = parse_csv(&text);
    assert_eq!(rows.len(), 65);
    for row in rows {
        let kappa: f64 = row[0].parse().unwrap();
        let sn: f64 = row[1].parse().unwrap();
        let cn: f64 = row[2].parse().unwrap();
        assert!((sn - kappa.sin()).abs() < 1e-10);
        assert!((cn - kappa.cos()).abs() < 1e-10);
    }
}

#[test]
fn print_config_round_trips() {
    let cfg = morris_config();
    let out = bin()
        .args(["--print-config", "--config", cfg.to_str().unwrap(), "verify"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    // defaults are explicit: derived normal-form knobs must be resolved
    assert_eq!(v["normal_form"]["i_max"], serde_json::json!(6));
    assert_eq!(v["normal_form"]["q_min"], serde_json::json!(-4));
    // and the printout re-parses to the identical printout
    let reprinted = bin()
        .args(["--print-config", "--config", cfg.to_str().unwrap(), "verify"])
        .output()
        .unwrap();
    assert_eq!(out.stdout, reprinted.stdout);
}

#[test]
fn verify_succeeds_on_morris() {
    let cfg = morris_config();
    let out = bin()
        .args(["verify", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn normalform_reports_the_ledger() {
    let cfg = write_config(
        "full.json",
        r#"{"forcing": {"n": 2, "T": 1.0, "p": [{"j": 0, "cos": [1.0]}, {"j": 1, "sin": [0.3]}, {"j": 2, "cos": [0.0, 0.2]}]}}"#,
    );
    let out = bin()
        .args(["normalform", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["smoothness_ledger"]["p0"], serde_json::json!(0));
    assert_eq!(v["smoothness_ledger"]["p1"], serde_json::json!(1));
    assert_eq!(v["smoothness_ledger"]["p2"], serde_json::json!(2));
    assert_eq!(v["lie_residuals_exact"], serde_json::json!(true));
    assert!(v["convergence_threshold"].as_f64().unwrap() >= 1.0);
    assert!(v["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn malformed_config_exits_with_code_2() {
    let cfg = write_config("bad.json", r#"{"forcing": {"n": 2}, "unknown_key": 1}"#);
    let out = bin()
        .args(["verify", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_forcing_exits_with_code_2() {
    // p_3 exceeds the degree bound 2n-2 = 2
    let cfg = write_config(
        "overdegree.json",
        r#"{"forcing": {"n": 2, "T": 1.0, "p": [{"j": 3, "cos": [1.0]}]}}"#,
    );
    let out = bin()
        .args(["verify", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn orbit_emits_the_documented_columns() {
    let cfg = morris_config();
    let out = bin()
        .args([
            "orbit",
            "--config",
            cfg.to_str().unwrap(),
            "--k",
            "9",
            "--points",
            "8",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let (head, rows) = parse_csv(&text);
    assert!(head.contains("t,x,y,K,kappa,Lambda,winding"));
    assert_eq!(rows.len(), 9);
    // backward by default
    let t_last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((t_last + 1.0).abs() < 1e-12);
}

#[test]
fn scan_emits_csv_and_summary() {
    let cfg = write_config(
        "scan.json",
        r#"{"forcing": {"n": 2, "T": 1.0, "p": [{"j": 0, "cos": [1.0]}]},
            "scan": {"seeds": 3, "k_min": 5.0, "k_max": 10.0, "iterations": 50, "k_ceiling": 1e4, "rng_seed": 1}}"#,
    );
    let dir = std::env::temp_dir().join("oscnf-cli-tests");
    let csv = dir.join("scan.csv");
    let summary = dir.join("scan.summary.json");
    let out = bin()
        .args([
            "scan",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            csv.to_str().unwrap(),
            "--summary",
            summary.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let (_, rows) = parse_csv(&text);
    assert_eq!(rows.len(), 3);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["escapes"], serde_json::json!(0));
    assert_eq!(v["seeds"], serde_json::json!(3));
}

#[test]
fn serial_runs_are_bit_reproducible() {
    let cfg = morris_config();
    let run = || {
        bin()
            .args([
                "poincare",
                "--config",
                cfg.to_str().unwrap(),
                "--k",
                "10",
                "--iters",
                "20",
            ])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}
