//! The binary's commands, output formats and exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> String {
    format!("{}/../../corpus/{name}.qlam", env!("CARGO_MANIFEST_DIR"))
}

fn qlam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlam"))
        .args(args)
        .env_remove("QLAM_SEED")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

/// A scratch source file unique to this test.
fn scratch(tag: &str, src: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("qlam-cli-{}-{tag}.qlam", std::process::id()));
    std::fs::write(&path, src).unwrap();
    path
}

#[test]
fn check_reports_type_and_expectation() {
    let out = qlam(&["--format", "json", "check", &corpus("hadamard")]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["type"], "B => S(B)");
    assert_eq!(v["expect"], "B => S(B)");
    assert_eq!(v["ok"], true);

    let out = qlam(&["check", &corpus("deutsch_id")]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "B * S(B)\n");
}

#[test]
fn expectation_mismatch_exits_one() {
    let path = scratch("mismatch", "-- expect: B\n|0> + |1>\n");
    let out = qlam(&["--format", "json", "check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["ok"], false);
    std::fs::remove_file(path).ok();
}

#[test]
fn input_errors_exit_two_with_a_kind() {
    let parse_err = scratch("parse", "|0> +\n");
    let type_err = scratch("type", "\\x:S(B). x * x\n");
    let cases = [
        (parse_err.to_str().unwrap().to_string(), "parse"),
        (type_err.to_str().unwrap().to_string(), "type"),
        ("/nonexistent/file.qlam".to_string(), "io"),
    ];
    for (file, kind) in &cases {
        let out = qlam(&["--format", "json", "check", file]);
        assert_eq!(out.status.code(), Some(2), "{file}");
        assert_eq!(json(&out)["error"]["kind"], *kind);
        let out = qlam(&["check", file]);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
    std::fs::remove_file(parse_err).ok();
    std::fs::remove_file(type_err).ok();
}

#[test]
fn bad_flags_are_rejected() {
    assert_eq!(qlam(&["--epsilon", "0", "check", &corpus("swap")]).status.code(), Some(2));
    assert_eq!(qlam(&["--fuel", "0", "check", &corpus("swap")]).status.code(), Some(2));
    assert_eq!(qlam(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn dist_lists_outcomes() {
    let out = qlam(&["--format", "json", "dist", &corpus("three_qubit_measure")]);
    assert!(out.status.success());
    let v = json(&out);
    let entries = v.as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert!((entries[0]["p"].as_f64().unwrap() - 5.0 / 14.0).abs() < 1e-12);
    assert_eq!(entries[1]["term"], "|1> * |1> * |1>");

    let out = qlam(&["dist", &corpus("no_cloning_measure_first")]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), "1/2\t|0> * |0>\n1/2\t|1> * |1>\n");

    let merged = json(&qlam(&["--format", "json", "dist", &corpus("teleport_plus")]));
    let branches = json(&qlam(&["--format", "json", "dist", "--branches", &corpus("teleport_plus")]));
    assert_eq!(merged.as_array().unwrap().len(), 1);
    assert_eq!(branches.as_array().unwrap().len(), 4);
}

#[test]
fn run_is_seeded_and_traces_chain() {
    let file = corpus("teleport_skew");
    let a = qlam(&["--seed", "3", "--format", "json", "run", "--trace", &file]);
    let b = Command::new(env!("CARGO_BIN_EXE_qlam"))
        .args(["--format", "json", "trace", &file])
        .env("QLAM_SEED", "3")
        .output()
        .unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["term"], "(3/5).|0> + (4/5).|1>");
    let steps = v["trace"].as_array().unwrap();
    assert!(!steps.is_empty());
    for w in steps.windows(2) {
        assert_eq!(w[0]["after"], w[1]["before"]);
    }
    assert_eq!(steps.last().unwrap()["after"], v["term"]);

    let text = qlam(&["trace", &corpus("swap")]);
    let text = String::from_utf8_lossy(&text.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("[betab p=1] "), "{}", lines[0]);
    assert!(lines[0].contains(" ⟶ "));
    assert_eq!(*lines.last().unwrap(), "|1> * |0>");
}

#[test]
fn fuel_exhaustion_is_a_runtime_error() {
    let out = qlam(&["--fuel", "1", "--format", "json", "dist", &corpus("deutsch_id")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"]["kind"], "runtime");
}

#[test]
fn denote_prints_amplitudes() {
    let out = qlam(&["--format", "json", "denote", &corpus("hadamard_on_superposition")]);
    assert!(out.status.success());
    let v = json(&out);
    let set = v.as_array().unwrap();
    assert_eq!(set.len(), 1);
    let amps = set[0].as_array().unwrap();
    assert_eq!(amps.len(), 2);
    assert!((amps[0][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(amps[1][0].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn properties_report() {
    let out = qlam(&["--seed", "5", "--format", "json", "properties", "--count", "40"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["generated"], 40);
    assert_eq!(v["passed"], true);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    for key in ["subject-reduction", "probability-conservation", "soundness", "commutation"] {
        assert!(v["checked"][key].as_u64().is_some(), "{key}");
    }
    assert_eq!(qlam(&["properties", "--qubits", "9"]).status.code(), Some(2));
}
