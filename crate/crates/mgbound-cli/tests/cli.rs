//! End-to-end checks of the command line driver: determinism, structured
//! round-trips, exit codes, and the export files.

use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mgbound")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn mgbound")
}

#[test]
fn twogrid_output_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let common = [
        "twogrid",
        "--set",
        "problem.kind=\"poisson1d\"",
        "--set",
        "problem.n=15",
        "--set",
        "coarse.mode=\"spd_noise\"",
        "--set",
        "coarse.magnitude=0.2",
        "--seed",
        "42",
    ];
    let a = run(&[&common[..], &["--out", out_a.to_str().unwrap()]].concat());
    let b = run(&[&common[..], &["--out", out_b.to_str().unwrap()]].concat());
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success());
    let csv_a = std::fs::read(out_a.join("twogrid.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("twogrid.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let plot_a = std::fs::read(out_a.join("plot.csv")).unwrap();
    let plot_b = std::fs::read(out_b.join("plot.csv")).unwrap();
    assert_eq!(plot_a, plot_b);
}

#[test]
fn structured_report_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "twogrid",
        "--out",
        dir.path().to_str().unwrap(),
        "--format",
        "structured",
        "--set",
        "problem.n=15",
        "--set",
        "coarse.mode=\"scale\"",
        "--set",
        "coarse.alpha=1.25",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let re = serde_json::to_string(&value).unwrap();
    let again: serde_json::Value = serde_json::from_str(&re).unwrap();
    assert_eq!(value, again);
    let measured = value["twogrid"][0]["measured"].as_f64().unwrap();
    assert!(measured > 0.0 && measured < 1.0);
    // csv must not exist in structured mode
    assert!(!dir.path().join("twogrid.csv").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let out = run(&["twogrid", "--set", "problem.kind=\"helmholtz\""]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[problem\n").unwrap();
    let out = run(&["twogrid", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("config"), "{msg}");
}

#[test]
fn pipeline_errors_exit_with_one() {
    // a non-A-convergent smoother weight is a pipeline failure, not a
    // config syntax problem
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "twogrid",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "smoother.kind=\"jacobi\"",
        "--set",
        "smoother.omega=1.99",
        "--set",
        "problem.n=15",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("A-convergent"), "{msg}");
}

#[test]
fn dump_split_writes_labels() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "twogrid",
        "--out",
        dir.path().to_str().unwrap(),
        "--dump-split",
        "--set",
        "problem.n=7",
        "--set",
        "output.dump_matrix=true",
    ]);
    assert!(out.status.success());
    let split = std::fs::read_to_string(dir.path().join("split.txt")).unwrap();
    assert_eq!(split, "0\n1\n0\n1\n0\n1\n0\n");
    let mtx = std::fs::read_to_string(dir.path().join("matrix.mtx")).unwrap();
    assert!(mtx.starts_with("%%MatrixMarket matrix coordinate real symmetric\n"));
    assert!(mtx.contains("7 7 13"));
}

#[test]
fn random_sweep_has_no_sandwich_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "sweep.kind=\"random\"",
        "--set",
        "sweep.seed_end=19",
        "--set",
        "problem.n=15",
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("twogrid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 20 * 3);
    for line in &lines[1..] {
        assert!(line.ends_with(",pass"), "{line}");
    }
}

#[test]
fn alpha_sweep_records_case_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "sweep.kind=\"alpha\"",
        "--set",
        "problem.n=31",
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("twogrid.csv")).unwrap();
    let cases: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(cases, vec!["C3", "C3", "exact", "C1", "C1", "C1"]);
}

#[test]
fn multigrid_report_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "multigrid",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        "problem.kind=\"poisson2d\"",
        "--set",
        "problem.nx=15",
        "--set",
        "problem.ny=15",
        "--set",
        "multigrid.levels=2",
        "--set",
        "multigrid.gamma=2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("multigrid.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 + 1); // header, two levels, aggregate
    assert!(lines[1].split(',').nth(16).unwrap() == "na"); // per-level existing
    let agg: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(agg[1], "all");
    assert!(agg[17] == "pass");
    // x_gamma present on the aggregate row
    assert!(agg[11] != "na");
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.ends_with("PASS")).count() >= 5);
}
