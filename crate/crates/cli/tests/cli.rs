use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hawkes(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hawkes-rf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path
}

const SMALL: &str = r#"{"horizons": [300], "sequences_per_cell": 1, "epsilons": [0.1], "fitted_families": ["EXP", "QEXP"]}"#;

/// Simulates the small grid and returns the EXP sequence file.
fn exp_sequence(dir: &TempDir) -> PathBuf {
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let status = hawkes(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    out.join("sequences/EXP/T300/seq0.txt")
}

#[test]
fn simulate_writes_one_file_per_generator() {
    let dir = TempDir::new().unwrap();
    exp_sequence(&dir);
    for family in ["EXP", "PWL", "QEXP", "RAY"] {
        let path = dir
            .path()
            .join(format!("run/sequences/{family}/T300/seq0.txt"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("T=300"), "{}", path.display());
    }
}

#[test]
fn fit_prints_one_rf_mle_row() {
    let dir = TempDir::new().unwrap();
    let seq = exp_sequence(&dir);
    let out = hawkes(&[
        "fit",
        seq.to_str().unwrap(),
        "--family",
        "exp",
        "--method",
        "rf-mle",
        "--epsilon",
        "0.1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let field = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(field("method"), "RF-MLE");
    assert_eq!(field("fitted_family"), "EXP");
    assert_eq!(field("epsilon"), "0.1");
    assert_eq!(field("generator_family"), "");
    assert!(field("llh").parse::<f64>().unwrap() < 0.0);
    assert_eq!(field("K"), "");
}

#[test]
fn family_tokens_are_case_insensitive() {
    let dir = TempDir::new().unwrap();
    let seq = exp_sequence(&dir);
    let rows: Vec<String> = ["exp", "Exp", "EXP"]
        .iter()
        .map(|token| stdout(&hawkes(&["fit", seq.to_str().unwrap(), "--family", token])))
        .collect();
    assert!(rows.iter().all(|r| r == &rows[0] && r.contains("EXP")));
    assert_eq!(
        hawkes(&["fit", seq.to_str().unwrap(), "--family", "gauss"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn missing_sequence_is_an_input_error() {
    let out = hawkes(&["fit", "/nonexistent/seq.txt", "--family", "EXP"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/seq.txt"));
}

#[test]
fn malformed_inputs_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "T=10\n3.0\n1.0\n").unwrap();
    assert_eq!(
        hawkes(&["fit", bad.to_str().unwrap(), "--family", "EXP"])
            .status
            .code(),
        Some(2)
    );

    let config = write_config(dir.path(), r#"{"horizon": [100]}"#);
    let out = hawkes(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(hawkes(&["fit"]).status.code(), Some(2));
}

#[test]
fn out_appends_with_a_single_header() {
    let dir = TempDir::new().unwrap();
    let seq = exp_sequence(&dir);
    let csv = dir.path().join("fits.csv");
    for method in ["mle", "rf-mle"] {
        let out = hawkes(&[
            "fit",
            seq.to_str().unwrap(),
            "--family",
            "EXP",
            "--method",
            method,
            "--out",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("sequence_id,"));
    assert!(lines[1].contains(",MLE,") && lines[2].contains(",RF-MLE,"));
}

#[test]
fn report_rebuilds_identical_files() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("bench");
    let run = hawkes(&[
        "benchmark",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout(&run).contains("improved"));

    let read = |name: &str| fs::read(out.join(name)).unwrap();
    let before = (read("summary.csv"), read("improvement.csv"));
    fs::remove_file(out.join("summary.csv")).unwrap();
    let report = hawkes(&["report", "--out", out.to_str().unwrap()]);
    assert!(report.status.success());
    assert_eq!((read("summary.csv"), read("improvement.csv")), before);
    assert!(fs::read_to_string(out.join("run.json"))
        .unwrap()
        .contains("config_hash"));
}

#[test]
fn benchmark_flags_override_the_config() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("bench");
    let run = hawkes(&[
        "benchmark",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--family",
        "ray",
        "--epsilon",
        "0.5,0.05",
        "--seed",
        "3",
    ]);
    assert!(run.status.success());
    let text = fs::read_to_string(out.join("per_sequence.csv")).unwrap();
    // 4 generators x (1 MLE + 2 RF-MLE rows), all fitted with RAY
    assert_eq!(text.lines().count(), 1 + 4 * 3);
    assert!(text.lines().skip(1).all(|l| l.contains(",RAY,")));
    assert!(text.contains(",0.05,") && text.contains(",0.5,"));
}
