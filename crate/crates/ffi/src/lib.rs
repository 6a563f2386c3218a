//! C ABI for spinfk.
//!
//! Every function returns a [`SpinfkStatus`]. On failure the message is
//! kept per thread and read with `spinfk_last_error`. Models are opaque
//! handles created from JSON and released with `spinfk_model_free`.
//! Strings returned through `char **` are owned by the caller and must be
//! released with `spinfk_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64 as C64;
use spinfk::field::FieldModel;
use spinfk::oracle::{build_truncated_pf, converged_matrix_element, ground_energy, FockSpec, Geometry, OracleVariant};
use spinfk::pf_mc::{fiber_matrix_element, McConfig, TestVector};
use spinfk::process::TimeGrid;
use spinfk::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpinfkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    InvalidParameter = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
    /// The experiment ran but at least one acceptance check failed.
    Failed = 8,
}

/// Monte Carlo estimate of a complex matrix element.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpinfkEstimate {
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

/// Cutoff-converged dense matrix element.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpinfkOracleValue {
    pub re: f64,
    pub im: f64,
    pub cutoff: usize,
    pub change: f64,
    pub converged: bool,
}

/// Opaque photon field model.
pub struct SpinfkModel {
    inner: FieldModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpinfkStatus {
    match e {
        Error::Config { .. } | Error::Model(_) => SpinfkStatus::Config,
        Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::TimeOutOfRange { .. } | Error::Unsupported(_) => SpinfkStatus::InvalidParameter,
        Error::Io(_) => SpinfkStatus::Io,
        _ => SpinfkStatus::Numerical,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<SpinfkStatus, (SpinfkStatus, String)>) -> SpinfkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("panic: {}", msg.unwrap_or_else(|| "unknown".into())));
            SpinfkStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SpinfkStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SpinfkStatus, String) {
    (SpinfkStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SpinfkStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (SpinfkStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_string(s: String, out: *mut *mut c_char) -> Result<(), (SpinfkStatus, String)> {
    let c = CString::new(s).map_err(|_| (SpinfkStatus::Numerical, "string contains NUL".to_string()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

unsafe fn spinor(p: *const f64, what: &str) -> Result<TestVector, (SpinfkStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = std::slice::from_raw_parts(p, 4);
    Ok(TestVector::vacuum([C64::new(s[0], s[1]), C64::new(s[2], s[3])]))
}

unsafe fn momentum(p: *const f64) -> Result<[f64; 3], (SpinfkStatus, String)> {
    if p.is_null() {
        return Err(null("p"));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok([s[0], s[1], s[2]])
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn spinfk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn spinfk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn spinfk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a field model from its JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spinfk_model_from_json(json: *const c_char, out: *mut *mut SpinfkModel) -> SpinfkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let inner = FieldModel::from_json(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SpinfkModel { inner }));
        Ok(SpinfkStatus::Ok)
    })
}

/// Single mode with ω = sqrt(|k|² + m²).
///
/// # Safety
/// `k` must point to three doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spinfk_model_single_mode(
    k: *const f64,
    weight: f64,
    phi_hat: f64,
    coupling: f64,
    mass: f64,
    out: *mut *mut SpinfkModel,
) -> SpinfkStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let k = momentum(k)?;
        let inner = FieldModel::single_mode(k, weight, phi_hat, coupling, mass).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SpinfkModel { inner }));
        Ok(SpinfkStatus::Ok)
    })
}

/// # Safety
/// `model` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn spinfk_model_free(model: *mut SpinfkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// SHA-256 content hash of the model as 64 hex digits.
///
/// # Safety
/// Pointers must be valid; free the result with `spinfk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn spinfk_model_hash(model: *const SpinfkModel, out: *mut *mut c_char) -> SpinfkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(m.inner.content_hash(), out)?;
        Ok(SpinfkStatus::Ok)
    })
}

/// Monte Carlo estimate of (Φ, e^{-tH^ε(P)} Ψ) for vacuum field states.
/// `phi` and `psi` are spinors as four doubles (re+, im+, re-, im-).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn spinfk_fiber_matrix_element(
    model: *const SpinfkModel,
    p: *const f64,
    phi: *const f64,
    psi: *const f64,
    t: f64,
    eps: f64,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    out: *mut SpinfkEstimate,
) -> SpinfkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (p, phi, psi) = (momentum(p)?, spinor(phi, "phi")?, spinor(psi, "psi")?);
        let grid = TimeGrid::new(t, n_steps).map_err(lib_err)?;
        let cfg = McConfig::new(n_paths, grid, seed);
        let e = fiber_matrix_element(p, &phi, &psi, t, eps, &m.inner, &cfg).map_err(lib_err)?;
        *out = SpinfkEstimate { re: e.mean.re, im: e.mean.im, stderr: e.stderr, n_paths: e.n };
        Ok(SpinfkStatus::Ok)
    })
}

/// Dense-oracle value of the same fiber matrix element, raising the
/// occupation cutoff until it changes by less than `tol`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn spinfk_fiber_oracle(
    model: *const SpinfkModel,
    p: *const f64,
    phi: *const f64,
    psi: *const f64,
    t: f64,
    eps: f64,
    tol: f64,
    max_cutoff: usize,
    out: *mut SpinfkOracleValue,
) -> SpinfkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (p, phi, psi) = (momentum(p)?, spinor(phi, "phi")?, spinor(psi, "psi")?);
        let c = converged_matrix_element(&m.inner, p, OracleVariant::Full { eps }, &phi, &psi, t, tol, 2, max_cutoff).map_err(lib_err)?;
        *out = SpinfkOracleValue { re: c.value.re, im: c.value.im, cutoff: c.cutoff, change: c.change, converged: c.converged };
        Ok(SpinfkStatus::Ok)
    })
}

/// Ground energy of the truncated fiber operator H^ε(P).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn spinfk_fiber_ground_energy(
    model: *const SpinfkModel,
    p: *const f64,
    eps: f64,
    cutoff: usize,
    out: *mut f64,
) -> SpinfkStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let spec = FockSpec { model: m.inner.clone(), cutoff };
        let h = build_truncated_pf(&spec, &Geometry::Fiber { p: momentum(p)? }, OracleVariant::Full { eps }).map_err(lib_err)?;
        *out = ground_energy(&h).map_err(lib_err)?;
        Ok(SpinfkStatus::Ok)
    })
}

/// Runs an experiment config (the CLI's JSON format) and returns the JSON
/// report. The `output` field is ignored. Returns `SPINFK_STATUS_FAILED`
/// with the report still filled in when an acceptance check fails.
///
/// # Safety
/// `config_json` must be NUL-terminated and `report_json` valid; free the
/// report with `spinfk_string_free`.
#[no_mangle]
pub unsafe extern "C" fn spinfk_run_experiment(config_json: *const c_char, report_json: *mut *mut c_char) -> SpinfkStatus {
    guard(|| {
        if report_json.is_null() {
            return Err(null("report_json"));
        }
        *report_json = ptr::null_mut();
        let text = read_str(config_json, "config_json")?;
        let cfg = spinfk::cli::parse_config(text).map_err(lib_err)?;
        let (report, _) = spinfk::cli::run_experiment(&cfg, Default::default()).map_err(lib_err)?;
        out_string(serde_json::to_string(&report).expect("report serializes"), report_json)?;
        Ok(if report.pass { SpinfkStatus::Ok } else { SpinfkStatus::Failed })
    })
}
