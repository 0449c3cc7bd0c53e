#![allow(dead_code)]

use qlam::surface::{parse, SourceFile};

pub fn corpus_path(name: &str) -> String {
    format!("{}/../../corpus/{name}.qlam", env!("CARGO_MANIFEST_DIR"))
}

pub fn load(name: &str) -> SourceFile {
    let path = corpus_path(name);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    parse(&src).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub const RUNNABLE: &[&str] = &[
    "deutsch_id",
    "deutsch_const0",
    "teleport_basis0",
    "teleport_basis1",
    "teleport_plus",
    "teleport_skew",
    "three_qubit_measure",
    "swap",
    "hadamard_on_superposition",
    "no_cloning_measure_first",
];
