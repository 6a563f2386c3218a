use std::ffi::{CStr, CString};
use std::ptr;

use spinfk_ffi::*;

const K: [f64; 3] = [0.6, 0.0, 0.8];
const UP: [f64; 4] = [1.0, 0.0, 0.0, 0.0];
const MIXED: [f64; 4] = [0.8, 0.0, 0.36, 0.48];

fn model() -> *mut SpinfkModel {
    let mut m = ptr::null_mut();
    let s = unsafe { spinfk_model_single_mode(K.as_ptr(), 0.01, 1.0, 0.3, 0.0, &mut m) };
    assert_eq!(s, SpinfkStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = spinfk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn null_pointers_are_reported() {
    let mut out = SpinfkEstimate::default();
    let s = unsafe { spinfk_fiber_matrix_element(ptr::null(), K.as_ptr(), UP.as_ptr(), UP.as_ptr(), 0.5, 0.2, 10, 10, 1, &mut out) };
    assert_eq!(s, SpinfkStatus::NullPointer);
    assert!(last_error().contains("model"));

    let s = unsafe { spinfk_model_from_json(ptr::null(), &mut ptr::null_mut()) };
    assert_eq!(s, SpinfkStatus::NullPointer);

    unsafe {
        spinfk_model_free(ptr::null_mut());
        spinfk_string_free(ptr::null_mut());
    }
}

#[test]
fn bad_inputs_map_to_error_codes() {
    let mut m = ptr::null_mut();
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { spinfk_model_from_json(bad.as_ptr(), &mut m) }, SpinfkStatus::Config);
    assert!(m.is_null());

    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { spinfk_model_from_json(invalid.as_ptr().cast(), &mut m) }, SpinfkStatus::InvalidUtf8);

    let model = model();
    let mut out = SpinfkEstimate::default();
    let s = unsafe { spinfk_fiber_matrix_element(model, K.as_ptr(), UP.as_ptr(), UP.as_ptr(), 0.5, 0.2, 10, 0, 1, &mut out) };
    assert_eq!(s, SpinfkStatus::InvalidParameter);
    assert!(last_error().contains("n_steps"));
    unsafe { spinfk_model_free(model) };
}

#[test]
fn model_json_round_trip_keeps_hash() {
    let a = model();
    let mut h1 = ptr::null_mut();
    assert_eq!(unsafe { spinfk_model_hash(a, &mut h1) }, SpinfkStatus::Ok);
    let hash1 = unsafe { CStr::from_ptr(h1) }.to_str().unwrap().to_owned();
    assert_eq!(hash1.len(), 64);

    let core = spinfk::field::FieldModel::single_mode(K, 0.01, 1.0, 0.3, 0.0).unwrap();
    assert_eq!(hash1, core.content_hash());
    let json = CString::new(serde_json::to_string(&core).unwrap()).unwrap();
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { spinfk_model_from_json(json.as_ptr(), &mut b) }, SpinfkStatus::Ok);
    let mut h2 = ptr::null_mut();
    assert_eq!(unsafe { spinfk_model_hash(b, &mut h2) }, SpinfkStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(h2) }.to_str().unwrap(), hash1);
    unsafe {
        spinfk_string_free(h1);
        spinfk_string_free(h2);
        spinfk_model_free(a);
        spinfk_model_free(b);
    }
}

#[test]
fn fiber_estimate_matches_core_and_oracle() {
    use spinfk::pf_mc::{fiber_matrix_element, McConfig, TestVector};
    use spinfk::process::TimeGrid;
    use spinfk::C64;

    let model = model();
    let p = [0.4, 0.0, 0.0];
    let mut est = SpinfkEstimate::default();
    let s = unsafe { spinfk_fiber_matrix_element(model, p.as_ptr(), MIXED.as_ptr(), UP.as_ptr(), 0.5, 0.2, 4000, 40, 9, &mut est) };
    assert_eq!(s, SpinfkStatus::Ok);
    assert_eq!(est.n_paths, 4000);

    let core_model = spinfk::field::FieldModel::single_mode(K, 0.01, 1.0, 0.3, 0.0).unwrap();
    let phi = TestVector::vacuum([C64::new(0.8, 0.0), C64::new(0.36, 0.48)]);
    let psi = TestVector::vacuum([C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
    let cfg = McConfig::new(4000, TimeGrid::new(0.5, 40).unwrap(), 9);
    let direct = fiber_matrix_element(p, &phi, &psi, 0.5, 0.2, &core_model, &cfg).unwrap();
    assert_eq!((est.re, est.im), (direct.mean.re, direct.mean.im));

    let mut o = SpinfkOracleValue::default();
    let s = unsafe { spinfk_fiber_oracle(model, p.as_ptr(), MIXED.as_ptr(), UP.as_ptr(), 0.5, 0.2, 1e-6, 8, &mut o) };
    assert_eq!(s, SpinfkStatus::Ok);
    assert!(o.converged);
    let z = ((est.re - o.re).powi(2) + (est.im - o.im).powi(2)).sqrt() / est.stderr;
    assert!(z < 4.0, "z = {z}");

    let mut e0 = 0.0;
    assert_eq!(unsafe { spinfk_fiber_ground_energy(model, p.as_ptr(), 0.2, 4, &mut e0) }, SpinfkStatus::Ok);
    assert!(e0.is_finite());
    unsafe { spinfk_model_free(model) };
}

#[test]
fn run_experiment_returns_report() {
    let cfg = CString::new(r#"{"schema_version": 1, "paths": 2000, "experiment": {"kind": "ito_suite"}}"#).unwrap();
    let mut report = ptr::null_mut();
    let s = unsafe { spinfk_run_experiment(cfg.as_ptr(), &mut report) };
    assert_eq!(s, SpinfkStatus::Ok, "{}", last_error());
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    assert_eq!(v["kind"], "ito_suite");
    assert_eq!(v["pass"], true);
    unsafe { spinfk_string_free(report) };

    let bad = CString::new(r#"{"schema_version": 1, "experiment": {"kind": "nope"}}"#).unwrap();
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { spinfk_run_experiment(bad.as_ptr(), &mut report) }, SpinfkStatus::Config);
    assert!(report.is_null());
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/spinfk.h")).unwrap();
    assert!(h.contains("SPINFK_H"));
    assert!(h.contains("typedef struct SpinfkModel SpinfkModel;"));
    assert!(h.contains("SPINFK_STATUS_NULL_POINTER = 1"));
    for f in [
        "spinfk_last_error", "spinfk_version", "spinfk_string_free", "spinfk_model_from_json", "spinfk_model_single_mode",
        "spinfk_model_free", "spinfk_model_hash", "spinfk_fiber_matrix_element", "spinfk_fiber_oracle",
        "spinfk_fiber_ground_energy", "spinfk_run_experiment",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing");
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(spinfk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
