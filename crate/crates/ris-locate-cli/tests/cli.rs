//! End-to-end tests of the binary: output contracts, determinism, and
//! exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CSV_HEADER: &str = "sweep_variable,sweep_value,solver,metric,value,n_trials,n_failed,seed";

/// A deliberately small run so each spawned binary finishes quickly.
const FAST_RUN: &str = "\
[waveform]
n_blocks = 16
n_pilots = 8
snr_db = 0

[solver]
solvers = tmsbl, omp

[experiment]
variable = snr_db
values = 0
n_trials = 2
seed = 11
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ris-locate"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary spawned");
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.ini");
    fs::write(&path, text).expect("config written");
    path
}

#[test]
fn run_writes_the_contracted_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_RUN);
    run_ok(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(dir.path()));

    let csv = fs::read_to_string(dir.path().join("ris_locate_results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let body: Vec<&str> = lines.collect();
    // 1 sweep value x 2 solvers x 3 metrics
    assert_eq!(body.len(), 6);
    for line in &body {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8, "malformed row: {line}");
        assert_eq!(fields[0], "snr_db");
        assert_eq!(fields[5], "2");
        assert_eq!(fields[7], "11");
        // float columns carry nine significant digits in scientific notation
        assert!(fields[1].contains('e'), "sweep_value not scientific: {line}");
        assert!(fields[4].contains('e'), "value not scientific: {line}");
    }

    let summary = fs::read_to_string(dir.path().join("ris_locate_summary.txt")).unwrap();
    assert!(summary.contains("[waveform]"));
    assert!(summary.contains("wall clock"));
    assert!(summary.contains("snr_db = 0:"));
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), FAST_RUN);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_ok(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(dir_a.path()));
    run_ok(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(dir_b.path()));
    let a = fs::read(dir_a.path().join("ris_locate_results.csv")).unwrap();
    let b = fs::read(dir_b.path().join("ris_locate_results.csv")).unwrap();
    assert_eq!(a, b, "rerun with the same seed must reproduce the CSV bit for bit");
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_RUN);
    run_ok(
        bin()
            .arg("run")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path())
            .arg("--seed")
            .arg("99"),
    );
    let csv = fs::read_to_string(dir.path().join("ris_locate_results.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",99"), "seed column not overridden: {line}");
    }
}

#[test]
fn unknown_key_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[arrays]\nn_rows = 2\n");
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("n_rows"), "stderr: {stderr}");
}

#[test]
fn missing_config_exits_with_code_2() {
    let out = bin()
        .arg("validate")
        .arg("--config")
        .arg("/nonexistent/run.ini")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invariant_violation_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[waveform]\nbandwidth_hz = 4e9\n");
    let out = bin().arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("fractional bandwidth"), "stderr: {stderr}");
}

#[test]
fn complexity_prints_the_reference_table() {
    let out = run_ok(bin().arg("complexity"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for needle in ["dcs_somp", "216640", "2165120", "728000", "224512", "4800", "5336000"] {
        assert!(stdout.contains(needle), "missing {needle} in:\n{stdout}");
    }
}

#[test]
fn validate_echo_parses_back_identically() {
    let first = run_ok(bin().arg("validate"));
    let dir = tempfile::tempdir().unwrap();
    let echoed = dir.path().join("echo.ini");
    fs::write(&echoed, &first.stdout).unwrap();
    let second = run_ok(bin().arg("validate").arg("--config").arg(&echoed));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn heatmap_writes_one_row_per_valid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FAST_RUN);
    run_ok(
        bin()
            .arg("heatmap")
            .arg("--lattice")
            .arg("2")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path()),
    );
    let csv = fs::read_to_string(dir.path().join("ris_locate_heatmap.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    let body: Vec<&str> = lines.collect();
    // the 2x2 lattice corner [0, 0] coincides with the transmitter
    assert_eq!(body.len(), 3);
    for line in &body {
        assert!(line.starts_with("ris_cell,"), "row: {line}");
    }
}
