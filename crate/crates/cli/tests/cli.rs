use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probit-uq"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_is_deterministic_and_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "--d", "3", "--alpha", "2", "--tau", "0.5", "--seed", "7"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&a, &args).status.success());
    assert!(run(&b, &args).status.success());
    let text = std::fs::read_to_string(a.join("dataset.csv")).unwrap();
    assert_eq!(text, std::fs::read_to_string(b.join("dataset.csv")).unwrap());

    let lines: Vec<&str> = text.lines().collect();
    // Column names, parameters, the teacher row, then n = 6 samples.
    assert_eq!(lines.len(), 3 + 6);
    assert_eq!(lines[0], "d,n,tau,seed");
    assert_eq!(lines[1], "3,6,0.5,7");
    assert_eq!(lines[2].split(',').count(), 3);
    for row in &lines[3..] {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 4);
        assert!(fields[3] == "1" || fields[3] == "-1", "label {}", fields[3]);
    }
}

#[test]
fn se_reports_bayes_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["se", "--alpha", "10", "--tau", "0.5"]);
    assert!(out.status.success());
    let v = json(&dir.path().join("se.json"));
    assert!((v["overlaps"]["q_bo"].as_f64().unwrap() - 0.9153).abs() < 1e-3);
    assert!((v["derived"]["bayes_error"].as_f64().unwrap() - 0.173).abs() < 1e-3);
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, v);

    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["params"]["command"], "se");
    assert!(m["library_version"].is_string());
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["se", "--alpha", "nope"]).status.code(), Some(2));
    assert_eq!(
        run(dir.path(), &["se", "--alpha", "-1", "--tau", "0"]).status.code(),
        Some(2)
    );
    // Below the separability threshold the unregularized minimizer does not exist.
    let sep = run(dir.path(), &["se", "--alpha", "1", "--tau", "0", "--lambda", "0"]);
    assert_eq!(sep.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&sep.stderr).is_empty());
}

#[test]
fn json_tables_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let args = [
        "--format",
        "json",
        "calibration",
        "--alpha",
        "5",
        "--tau",
        "0.5",
        "--lambda",
        "0.1",
        "--points",
        "9",
    ];
    assert!(run(&a, &args).status.success());
    let v = json(&a.join("calibration.json"));
    assert_eq!(v["columns"], serde_json::json!(["p", "delta"]));
    assert_eq!(v["rows"].as_array().unwrap().len(), 9);

    let b = dir.path().join("b");
    let manifest = a.join("manifest.json");
    assert!(run(&b, &["replay", manifest.to_str().unwrap()]).status.success());
    assert_eq!(
        std::fs::read(a.join("calibration.json")).unwrap(),
        std::fs::read(b.join("calibration.json")).unwrap()
    );
}

#[test]
fn solvers_read_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(
        dir.path(),
        &["generate", "--d", "40", "--alpha", "4", "--tau", "0.5", "--seed", "1"]
    )
    .status
    .success());
    let data = dir.path().join("dataset.csv");
    let data = data.to_str().unwrap();

    let g = dir.path().join("gamp");
    assert!(run(&g, &["gamp", "--data", data, "--n-test", "2000"]).status.success());
    let r = json(&g.join("gamp_result.json"));
    assert_eq!(r["w_hat"].as_array().unwrap().len(), 40);
    assert_eq!(r["converged"], true);

    let e = dir.path().join("erm");
    assert!(run(&e, &["erm", "--data", data, "--lambda", "0.1", "--n-test", "2000"])
        .status
        .success());
    let o = json(&e.join("erm_overlaps.json"));
    let err = o["test_error"].as_f64().unwrap();
    assert!(err > 0.0 && err < 0.5);

    // The logistic channel needs a penalty.
    let bad = run(&g, &["gamp", "--data", data, "--channel", "erm"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn theory_only_figure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["figure", "fig6", "--theory-only", "--grid", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&dir.path().join("manifest.json"));
    let outputs = m["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for f in outputs {
        assert!(dir.path().join(f.as_str().unwrap()).exists(), "{f}");
    }
    assert!(outputs.iter().any(|f| f.as_str().unwrap().ends_with(".svg")));
}
