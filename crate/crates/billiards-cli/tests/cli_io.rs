//! Black-box tests of the binary: output formats round-trip, envelopes
//! carry the run metadata, rejected configs are data rather than errors,
//! and the exit codes separate config mistakes from numeric failures.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_billiards-cli")
}

fn scratch_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("billiards-cli-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_spec(dir: &std::path::Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

#[test]
fn census_csv_round_trips_through_a_reader() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let out = run(&["orbits", "--table", spec.to_str().unwrap(), "--n", "2", "--format", "csv"]);
    assert!(out.status.success());

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(out.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["period", "itinerary", "length", "grazing_margin", "s_n_g"]
    );
    let mut lengths = Vec::new();
    for record in reader.records() {
        let record = record.unwrap();
        assert_eq!(record.len(), 5);
        assert_eq!(record[0].parse::<usize>().unwrap(), 2);
        assert!(record[1].contains(';'), "two-symbol itinerary expected: {}", &record[1]);
        lengths.push(record[2].parse::<f64>().unwrap());
        record[3].parse::<f64>().unwrap();
        assert_eq!(record[4].parse::<f64>().unwrap(), 0.0);
    }
    // The hexagonal table at d = 2.2 has 18 period-2 orbits, three of them
    // the center-line bounces of length 2(d - 2).
    assert_eq!(lengths.len(), 18);
    let bounces = lengths.iter().filter(|l| (**l - 0.4).abs() < 1e-9).count();
    assert_eq!(bounces, 3);
}

#[test]
fn empty_results_still_emit_the_csv_header() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_empty.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let out = run(&[
        "graze-scan",
        "--table",
        spec.to_str().unwrap(),
        "--n-max",
        "2",
        "--threshold",
        "1e-9",
        "--format",
        "csv",
    ]);
    assert!(out.status.success());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(out.stdout.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["period", "itinerary", "margin"]
    );
    assert_eq!(reader.records().count(), 0);
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_det.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let args = [
        "cells",
        "--table",
        spec.to_str().unwrap(),
        "--n-max",
        "3",
        "--budget",
        "4000",
        "--seed",
        "11",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn json_envelope_carries_run_metadata() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_env.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let out = run(&["check-horizon", "--table", spec.to_str().unwrap(), "--seed", "9"]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["tool"], "billiards-cli");
    assert_eq!(value["command"], "check-horizon");
    assert_eq!(value["seed"], 9);
    assert_eq!(value["version"], env!("CARGO_PKG_VERSION"));
    let hash = value["table_hash"].as_str().unwrap();
    assert!(hash.starts_with("sha256:") && hash.len() == 7 + 64, "unexpected hash {hash}");
    assert_eq!(value["result"]["finite"], true);
}

#[test]
fn rejected_domain_is_data_not_an_error() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_touching.json", "{\"family\": \"hexagonal\", \"d\": 2.0}");
    let out = run(&["validate-domain", "--table", spec.to_str().unwrap()]);
    assert!(out.status.success(), "a rejecting verdict is a result, not a failure");
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["result"]["accepted"], false);
    assert!(!value["result"]["violated_constraints"].as_array().unwrap().is_empty());
}

#[test]
fn config_errors_exit_two_and_numeric_failures_exit_three() {
    // Missing table file: config error.
    let out = run(&["check-horizon", "--table", "/nonexistent/table.json"]);
    assert_eq!(out.status.code(), Some(2));

    // Malformed potential string: config error.
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_pot.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let out = run(&[
        "orbits",
        "--table",
        spec.to_str().unwrap(),
        "--n",
        "2",
        "--potential",
        "cubic",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // Unknown flag: clap reports a usage error.
    let out = run(&["srb-bound", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));

    // Out-of-range estimator input: numeric failure.
    let out = run(&[
        "tail-bound", "--s0", "1.5", "--k", "12", "--tau-min", "0.15", "--tau-max", "2.4",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn output_file_matches_stdout_bytes() {
    let dir = scratch_dir();
    let spec = write_spec(&dir, "hex_out.json", "{\"family\": \"hexagonal\", \"d\": 2.2}");
    let out_path = dir.join("horizon.json");
    let to_file = run(&[
        "check-horizon",
        "--table",
        spec.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(to_file.status.success());
    assert!(to_file.stdout.is_empty());
    let to_stdout = run(&["check-horizon", "--table", spec.to_str().unwrap()]);
    assert_eq!(std::fs::read(&out_path).unwrap(), to_stdout.stdout);
}
