use std::path::Path;
use std::process::{Command, Output};

use dirac_spectra::eigensolver::SpectrumArtifact;
use dirac_spectra::experiments::GenericityReport;
use dirac_spectra::torus::{closed_form_spectrum, SpinStructure};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirac-spectra"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_artifact(path: &Path) -> SpectrumArtifact {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flat_spectrum_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.json");
    let res = run(&["spectrum", "--delta", "1,0,0", "--N", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let art = read_artifact(&out);
    assert_eq!(art.meta.order, 3);
    let lines = closed_form_spectrum(SpinStructure::new([1, 0, 0]).unwrap(), 2.5).unwrap();
    let positive: Vec<_> = art.clusters.iter().filter(|c| c.lambda > 0.0 && c.lambda <= 2.5 + 1e-9).collect();
    assert_eq!(positive.len(), lines.len());
    for (c, l) in positive.iter().zip(&lines) {
        assert!((c.lambda - l.lambda).abs() < 1e-12);
        assert_eq!(c.mult_c, l.mult_complex);
        assert_eq!(c.mult_h, l.mult_quaternionic);
    }
}

#[test]
fn constant_factor_rescales_spectrum() {
    let flat = run(&["spectrum", "--delta", "0,0,0", "--N", "2"]);
    let scaled = run(&["spectrum", "--delta", "0,0,0", "--N", "2", "--f-const", "0.1", "--t", "0.5"]);
    assert_eq!(scaled.status.code(), Some(0));
    let a: SpectrumArtifact = serde_json::from_slice(&flat.stdout).unwrap();
    let b: SpectrumArtifact = serde_json::from_slice(&scaled.stdout).unwrap();
    let s = (-0.05f64).exp();
    for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
        assert!((y - s * x).abs() < 1e-10);
    }
}

#[test]
fn spectrum_csv_and_determinism() {
    let args = ["spectrum", "--delta", "0,1,1", "--N", "2", "--f-random-degree", "2", "--seed", "5", "--t", "0.1"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut csv = args.to_vec();
    csv.extend(["--format", "csv"]);
    let c = run(&csv);
    let text = String::from_utf8(c.stdout).unwrap();
    assert!(text.starts_with("lambda,mult_complex,mult_quaternionic\n"));
}

#[test]
fn malformed_factor_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    std::fs::write(
        &path,
        r#"{"degree": 1, "coeffs": [{"m": [1, 0, 0], "re": 0.5, "im": 0.0}]}"#,
    )
    .unwrap();
    let res = run(&["spectrum", "--f-file", path.to_str().unwrap(), "--t", "0.1", "--N", "1"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("reality"));
}

#[test]
fn out_of_range_inputs_exit_with_validation_code() {
    assert_eq!(run(&["spectrum", "--N", "9"]).status.code(), Some(3));
    assert_eq!(run(&["spectrum", "--delta", "0,3,0"]).status.code(), Some(3));
    assert_eq!(run(&["perturb", "--N", "2", "--cluster", "40"]).status.code(), Some(3));
    assert_eq!(run(&["split-search", "--delta", "1,0,0", "--N", "2", "--cluster", "1"]).status.code(), Some(3));
}

#[test]
fn oracle_command() {
    let res = run(&["oracle", "--delta", "0,0,0", "--lambda-max", "1"]);
    assert_eq!(res.status.code(), Some(0));
    let v = stdout_json(&res);
    let lines = v.as_array().unwrap();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["mult_complex"], 6);
}

#[test]
fn perturb_reports_rates_and_fd_table() {
    let res = run(&["perturb", "--delta", "0,0,0", "--N", "2", "--cluster", "1", "--f-const", "0.3"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = stdout_json(&res);
    for r in v["report"]["rates"].as_array().unwrap() {
        assert!((r.as_f64().unwrap() + 0.3).abs() < 1e-14);
    }
    let res = run(&[
        "perturb", "--delta", "1,0,0", "--N", "2", "--cluster", "2", "--f-random-degree", "2", "--seed", "3",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = stdout_json(&res);
    let order = v["fd"]["fitted_order"].as_f64().unwrap();
    assert!(order >= 1.9, "order {order}");
}

#[test]
fn genericity_with_no_trials() {
    let res = run(&["genericity", "--trials", "0"]);
    assert_eq!(res.status.code(), Some(0));
    let r: GenericityReport = serde_json::from_slice(&res.stdout).unwrap();
    assert!(r.trials.is_empty() && r.failures.is_empty());
    assert_eq!(r.simple_fraction, 0.0);
}

#[test]
fn genericity_is_reproducible() {
    let args = ["genericity", "--trials", "3", "--N", "2", "--seed", "11", "--workers", "2"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r: GenericityReport = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r.trials.len(), 3);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"delta": [1, 1, 0], "N": 1, "t": 0.2, "factor": {"kind": "const", "value": 0.5}}"#,
    )
    .unwrap();
    let res = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--t", "0.4"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let art: SpectrumArtifact = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(art.meta.t, 0.4);
    assert_eq!(art.meta.order, 1);
    assert_eq!(art.meta.delta, SpinStructure::new([1, 1, 0]).unwrap());
    let first = art.eigenvalues.iter().cloned().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    assert!((first - (2f64).sqrt() / 2.0 * (-0.2f64).exp()).abs() < 1e-12);
    std::fs::write(&cfg, r#"{"N": 1, "unknown": 3}"#).unwrap();
    assert_eq!(run(&["spectrum", "--config", cfg.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn validate_passes_on_defaults() {
    let res = run(&["validate"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let v = stdout_json(&res);
    assert_eq!(v["passed"], true);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
