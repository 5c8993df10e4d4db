use std::path::Path;
use std::process::{Command, Output};

use switchcert_cli::RunReport;

fn switchcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchcert")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const DIAGONAL: &str = r#"{"dim": 2, "matrices": [[[1.2, 0], [0, 0.4]], [[0.4, 0], [0, 1.2]]]}"#;

#[test]
fn diagonal_fixture_certifies() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write(tmp.path(), "diag.json", DIAGONAL);
    let out = tmp.path().join("out");
    let o = switchcert(&["certify", "--instance", &inst, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("CERT ")).unwrap();
    assert!(line.ends_with("feasible=1"), "{line}");
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.constants.as_ref().unwrap().epsilon, 0.0);
    let lambda_star = report.certificate.unwrap().lambda_star.unwrap();
    assert!((lambda_star - 0.3670).abs() < 1e-4, "{lambda_star}");
}

#[test]
fn expanding_pair_has_no_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write(tmp.path(), "exp.json", r#"{"dim": 2, "matrices": [[[1.2, 0], [0, 1.1]], [[1.3, 0], [0, 1.5]]]}"#);
    let o = switchcert(&["certify", "--instance", &inst]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn infeasible_random_instance_exits_3() {
    let o = switchcert(&["certify", "--n", "10", "--dim", "2", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8(o.stdout).unwrap().contains("feasible=0"));
}

#[test]
fn violated_exhaustive_envelope_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write(tmp.path(), "diag.json", DIAGONAL);
    let o = switchcert(&["verify", "--instance", &inst]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn input_errors_exit_5() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(switchcert(&["analyze", "--instance", "/nonexistent/instance.json"]).status.code(), Some(5));
    let ragged = write(tmp.path(), "ragged.json", r#"{"dim": 2, "matrices": [[[1, 0], [0, 1]], [[1, 0], [0]]]}"#);
    let o = switchcert(&["analyze", "--instance", &ragged]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8(o.stderr).unwrap().contains("matrix 1, row 1"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(switchcert(&["certify", "--lambda", "fast"]).status.code(), Some(1));
    assert_eq!(switchcert(&["signal", "--n", "2", "--seed", "121", "--policy", "explicit"]).status.code(), Some(1));
    assert_eq!(
        switchcert(&["signal", "--n", "2", "--seed", "121", "--policy", "explicit", "--walk", "1,1"]).status.code(),
        Some(1)
    );
}

#[test]
fn signal_csv_on_stdout() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = write(tmp.path(), "diag.json", DIAGONAL);
    let o = switchcert(&[
        "signal", "--instance", &inst, "--policy", "alternate-stable", "--policy-vertex", "1", "--horizon", "4",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = String::from_utf8(o.stdout).unwrap();
    // Walk [3,1,3,1] expands to 2,1,1,2,1,1.
    assert_eq!(csv, "t,sigma\n0,2\n1,1\n2,1\n3,2\n4,1\n5,1\n");
}

#[test]
fn experiment_writes_curves_for_every_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = switchcert(&[
        "experiment", "--n", "3", "--seed", "29", "--trials", "7", "--horizon", "50", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(std::fs::read_dir(out.join("norms")).unwrap().count(), 7);
    let curve = std::fs::read_to_string(out.join("norms/trial_000.csv")).unwrap();
    assert!(curve.starts_with("t,norm\n"));
    assert_eq!(curve.lines().count(), 52);
    let signal = std::fs::read_to_string(out.join("signal.csv")).unwrap();
    assert!(signal.starts_with("t,sigma\n"));
    let text = std::fs::read_to_string(out.join("report.json")).unwrap();
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.trials.len(), 7);
    assert_eq!(report.to_json(), text);
}
