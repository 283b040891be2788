use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sqzdistill::analytic::fig1_dataset;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sqzdistill"))
}

fn run(out: &Path, args: &[&str]) -> Output {
    let o = bin().arg("--out").arg(out).args(args).output().unwrap();
    if o.status.code() == Some(2) {
        eprintln!("{}", String::from_utf8_lossy(&o.stderr));
    }
    o
}

/// The run directory is the last line printed on success.
fn run_dir(o: &Output) -> PathBuf {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().last().unwrap().trim())
}

fn metadata(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap()
}

#[test]
fn fig1_csv_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&run(tmp.path(), &["fig1", "--r-min", "0.0", "--r-max", "0.5", "--steps", "11"]));
    let name = dir.file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("fig1-") && name.len() == "fig1-".len() + 12, "{name}");
    let meta = metadata(&dir);
    assert_eq!(meta["command"], "fig1");
    assert_eq!(meta["config"]["steps"], 11);
    assert!(meta["convention"].as_str().unwrap().contains("log10"));

    let text = fs::read_to_string(dir.join("fig1.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,varA,varB,varC"));
    let grid: Vec<f64> = (0..11).map(|i| 0.05 * i as f64).collect();
    let rows = fig1_dataset(&grid).unwrap();
    for (line, row) in lines.zip(&rows) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 4);
        let num = |s: &str| s.parse::<f64>().unwrap();
        assert!((num(cells[0]) - row.r).abs() < 1e-12);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12 * b.abs().max(1.0);
        assert!(close(num(cells[1]), row.var_a));
        assert!(close(num(cells[2]), row.var_b));
        match row.var_c {
            Some(c) => assert!(close(num(cells[3]), c)),
            None => assert_eq!(cells[3], ""),
        }
    }
    // r = 0.35 is past atanh(1/3) = 0.3466
    assert!(text.lines().nth(8).unwrap().ends_with(','));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"r_min": 0.1, "r_max": 0.2, "steps": 5}"#).unwrap();
    let out = tmp.path().join("runs");
    let a = run_dir(&run(&out, &["--config", cfg.to_str().unwrap(), "fig1"]));
    let b = run_dir(&run(&out, &["--config", cfg.to_str().unwrap(), "fig1", "--steps", "7"]));
    assert_ne!(a, b);
    assert_eq!(metadata(&a)["config"]["steps"], 5);
    assert_eq!(metadata(&b)["config"]["steps"], 7);
    assert_eq!(metadata(&b)["config"]["r_max"], 0.2);
    assert_eq!(fs::read_to_string(b.join("fig1.csv")).unwrap().lines().count(), 8);
}

#[test]
fn repeated_runs_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["--seed", "5", "gaussify-mc", "--samples", "20000", "--schedule", "2.0"];
    let a = run_dir(&run(&tmp.path().join("a"), &args));
    let b = run_dir(&run(&tmp.path().join("b"), &args));
    assert_eq!(a.file_name(), b.file_name());
    for f in ["steps.json", "survivors.csv", "metadata.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(metadata(&a)["seed"], 5);
}

#[test]
fn subtract_reports_optimal_gain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_dir(&run(tmp.path(), &["subtract", "--r", "0.2", "--optimal-delta"]));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let gain = rep["fock"]["squeezing_db"].as_f64().unwrap() - rep["input"]["squeezing_db"].as_f64().unwrap();
    assert!((gain - 2.592346).abs() < 1e-5, "{gain}");
    let csv = fs::read_to_string(dir.join("wigner.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,w"));
    assert!(fs::read_to_string(dir.join("state.json")).unwrap().contains("\"cutoff\""));
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = run(tmp.path(), &["validate", "--suite", "analytic"]);
    assert_eq!(ok.status.code(), Some(0));
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir(&ok).join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["passed"], true);
    assert!(String::from_utf8_lossy(&ok.stdout).contains("PASS"));

    let bad = run(tmp.path(), &["validate", "--suite", "analytic", "--corrupt", "enhancement-boundary"]);
    assert_eq!(bad.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.lines().any(|l| l.contains("FAIL") && l.contains("enhancement-boundary")), "{stdout}");

    let err = run(tmp.path(), &["validate", "--suite", "nonsense"]);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("unknown suite"));
}

#[test]
fn bad_config_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, "[1, 2]").unwrap();
    let o = run(tmp.path(), &["--config", cfg.to_str().unwrap(), "fig1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(tmp.path(), &["fig1", "--steps", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
