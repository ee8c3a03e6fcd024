//! CLI acceptance: reruns of any fixture with the same seed produce
//! byte-identical report files (the manifest carries the only timestamp and
//! is excluded), exit codes follow the documented contract, and config
//! violations name the offending field.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn fixnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fixnet"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run_to(dir: &Path, args: &[&str]) -> i32 {
    let out = fixnet()
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs");
    out.status.code().unwrap_or(-1)
}

/// Compare every file except manifest.json byte by byte.
fn assert_dirs_identical(a: &Path, b: &Path) {
    let mut names: Vec<String> = fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    names.sort();
    assert!(!names.is_empty(), "no report files in {}", a.display());
    for n in &names {
        let left = fs::read(a.join(n)).unwrap_or_else(|_| panic!("missing {n} in first run"));
        let right = fs::read(b.join(n)).unwrap_or_else(|_| panic!("missing {n} in second run"));
        assert_eq!(left, right, "report file {n} differs between reruns");
    }
}

fn rerun_fixture(tag: &str, args: &[&str], expect_code: i32) {
    let base = std::env::temp_dir().join(format!("fixnet-accept-{tag}-{}", std::process::id()));
    let d1 = base.join("run1");
    let d2 = base.join("run2");
    let _ = fs::remove_dir_all(&base);
    fs::create_dir_all(&d1).unwrap();
    fs::create_dir_all(&d2).unwrap();
    let c1 = run_to(&d1, args);
    let c2 = run_to(&d2, args);
    assert_eq!(c1, expect_code, "{tag}: unexpected exit code on first run");
    assert_eq!(c2, expect_code, "{tag}: unexpected exit code on second run");
    assert_dirs_identical(&d1, &d2);
    let _ = fs::remove_dir_all(&base);
    println!("ACCEPTANCE 12 determinism [{tag}]: PASS — byte-identical reports, exit {expect_code}");
}

#[test]
fn criterion_12_determinism_catalog() {
    rerun_fixture("catalog", &["catalog"], 0);
}

#[test]
fn criterion_12_determinism_check_averaged() {
    rerun_fixture(
        "check",
        &["check-averaged", "--kind", "sigmoid", "--seed", "2024"],
        0,
    );
}

#[test]
fn criterion_12_determinism_iterate() {
    let cfg = fixture("iterate_halving.json");
    rerun_fixture("iterate", &["iterate", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn criterion_12_determinism_contraction() {
    let cfg = fixture("iterate_contraction.json");
    rerun_fixture("contraction", &["iterate", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn criterion_12_determinism_train() {
    let cfg = fixture("train_teacher_student.json");
    rerun_fixture("train", &["train", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn criterion_12_determinism_federated() {
    let cfg = fixture("federated_two_shards.json");
    rerun_fixture("federated", &["federated", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn criterion_12_determinism_gram_schmidt() {
    let cfg = fixture("gram_schmidt_two_vectors.json");
    rerun_fixture("gs", &["gram-schmidt", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn criterion_12_determinism_llm() {
    let cfg = fixture("llm_small_block.json");
    rerun_fixture("llm", &["llm-fixpoint", "--config", cfg.to_str().unwrap()], 0);
}

#[test]
fn check_all_rows_writes_full_summary() {
    let dir = std::env::temp_dir().join(format!("fixnet-all-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let code = run_to(&dir, &["check-averaged", "--all", "--samples", "2000", "--seed", "2024"]);
    assert_eq!(code, 0, "stated certificates must all verify");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 47, "one summary row per table entry");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn negative_control_exits_with_verification_failure() {
    let dir = std::env::temp_dir().join(format!("fixnet-neg-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let code = run_to(
        &dir,
        &["check-averaged", "--kind", "sigmoid", "--gamma", "0.1", "--seed", "2024"],
    );
    assert_eq!(code, 2, "failing certification must exit 2");
    let report = fs::read_to_string(dir.join("check_sigmoid.json")).unwrap();
    assert!(report.contains("\"witness\""), "failure report carries a witness pair");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn unknown_activation_name_lists_valid_names() {
    let out = fixnet()
        .args(["check-averaged", "--kind", "sigmod"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigmod") && err.contains("sigmoid"), "message lists valid names: {err}");
}

#[test]
fn unknown_config_field_is_rejected_with_its_name() {
    let dir = std::env::temp_dir().join(format!("fixnet-strict-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    fs::write(
        &bad,
        r#"{
  "seed": 1,
  "network": {
    "x0": [1.0],
    "layers": [
      { "weight": [[0.5]], "bias": [0.0], "activation": { "kind": "identity" } }
    ],
    "lambda": { "type": "constant", "value": 0.5 }
  },
  "tolerance": 1e-8
}"#,
    )
    .unwrap();
    let out = fixnet()
        .args(["iterate", "--config", bad.to_str().unwrap()])
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("tolerance"), "error names the offending field: {err}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn bad_activation_parameter_is_rejected() {
    let dir = std::env::temp_dir().join(format!("fixnet-actparam-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    fs::write(
        &bad,
        r#"{
  "seed": 1,
  "network": {
    "x0": [1.0],
    "layers": [
      { "weight": [[0.5]], "bias": [0.0], "activation": { "kind": "sigmoid", "lambda": 2.0 } }
    ],
    "lambda": { "type": "constant", "value": 0.5 }
  }
}"#,
    )
    .unwrap();
    let out = fixnet()
        .args(["iterate", "--config", bad.to_str().unwrap()])
        .arg("--out-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lambda"), "error names the extra parameter: {err}");
    let _ = fs::remove_dir_all(&dir);
}
