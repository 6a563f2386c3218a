use std::path::{Path, PathBuf};
use std::process::Command;

use spinfk::cli::{parse_config, Experiment};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn example_configs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().unwrap() != "schema.json")
        .collect();
    v.sort();
    v
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinfk"))
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("spinfk-cli-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

#[test]
fn example_configs_parse_and_match_schema() {
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs_dir().join("schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let examples = example_configs();
    assert!(examples.len() >= 12);
    for p in examples {
        let text = std::fs::read_to_string(&p).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
        let cfg = parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        // The serialized effective config must satisfy the schema too.
        let back = serde_json::to_value(&cfg).unwrap();
        let errors: Vec<String> = validator.iter_errors(&back).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{} round trip: {errors:?}", p.display());
    }
}

#[test]
fn schema_rejects_unknown_kind() {
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs_dir().join("schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert!(!validator.is_valid(&serde_json::json!({"experiment": {"kind": "nope"}})));
    assert!(!validator.is_valid(&serde_json::json!({"experiment": {"kind": "toy", "eps": 1}})));
}

#[test]
fn ito_suite_default_config_exits_zero() {
    let out = tmp("ito.json");
    let status = bin().args(["run"]).arg(configs_dir().join("ito_suite.json")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let ratio = report["result"]["ms_ratio"].as_f64().unwrap();
    assert!((1.7..=2.3).contains(&ratio), "{ratio}");
    assert_eq!(report["pass"], true);
    assert!(out.with_file_name("ito.residual_vs_n_steps.csv").exists());
}

#[test]
fn degenerate_toy_marks_branch() {
    let out = tmp("toy0.json");
    let status = bin().args(["run"]).arg(configs_dir().join("toy_degenerate.json")).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["result"]["degenerate_branch"], true);
    assert!(report["notes"][0].as_str().unwrap().contains("degenerate"));
    assert_eq!(report["model_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_json_exits_one_with_position() {
    let cfg = tmp("bad.json");
    std::fs::write(&cfg, "{\n  \"experiment\": {\"kind\": \"toy\",}\n}\n").unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2, column"), "{err}");
}

#[test]
fn failing_acceptance_exits_two() {
    // Too few Itô paths cannot resolve the mean-square ratio on this seed.
    let cfg = tmp("fail.json");
    std::fs::write(&cfg, r#"{"seed": 4, "paths": 2, "experiment": {"kind": "ito_suite", "n_steps": 4}}"#).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let pass = report["pass"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if pass { 0 } else { 2 }));
}

#[test]
fn overrides_are_recorded_and_results_ignore_worker_count() {
    let cfg = configs_dir().join("generator.json");
    let run = |workers: &str| -> serde_json::Value {
        let out = bin().arg("run").arg(&cfg).args(["--seed", "9", "--paths", "3000", "--workers", workers]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let a = run("1");
    let b = run("3");
    assert_eq!(a["overrides"]["seed"], 9);
    assert_eq!(a["overrides"]["paths"], 3000);
    assert_eq!(a["config"]["seed"], 9);
    assert_eq!(a["result"], b["result"]);
}

#[test]
fn bad_flag_is_a_config_error() {
    let out = bin().args(["run", "x.json", "--paths", "many"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["run", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kinds_cover_the_documented_list() {
    for kind in ["pauli_fk_vs_lattice", "generator_check", "pf_vs_fock", "fiber_vs_fock", "toy", "inequalities", "positivity", "ito_suite", "hypercontractivity"] {
        let c = parse_config(&format!(r#"{{"experiment": {{"kind": "{kind}"}}}}"#)).unwrap();
        assert!(!matches!(c.experiment, Experiment::ProcessStatistics(_)) || kind == "process_statistics");
    }
}
