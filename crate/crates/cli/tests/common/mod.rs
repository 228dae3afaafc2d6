#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn glcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glcn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn glcn_ok(args: &[&str]) -> String {
    let out = glcn(args);
    assert!(
        out.status.success(),
        "glcn {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Two planted clusters, 30 nodes each, with a 5-NN graph.
pub fn small_dataset(root: &Path) -> PathBuf {
    let dir = root.join("ds");
    glcn_ok(&[
        "gen-synth",
        "--n-per-class",
        "30",
        "--classes",
        "2",
        "--dim",
        "4",
        "--noise",
        "0.1",
        "--knn",
        "5",
        "--out",
        path(&dir),
    ]);
    dir
}

/// Flags for a short training run on `small_dataset`.
pub const SMALL_RUN: &[&str] = &[
    "--labels-per-class",
    "5",
    "--val-size",
    "10",
    "--test-size",
    "rest",
    "--max-epochs",
    "40",
    "--patience",
    "20",
];

pub fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

pub fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn quickstart_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/quickstart.json")
}
