//! Finite-mode photon field: covariances, Gaussian sampling, bound
//! constants and a single-mode hypercontractivity check.
//!
//! Each listed mode is a real field mode with a cos(k·x) kernel, i.e. a
//! ±k pair. It is carried by four real oscillators, a cos and a sin
//! oscillator for each polarization:
//!
//!   A_μ(x) = c Σ_j e_jμ [cos(k·x) X_cj + sin(k·x) X_sj]
//!   B_μ(x) = c Σ_j (k×e_j)_μ [-sin(k·x) X_cj + cos(k·x) X_sj]
//!
//! with c = φ̂ sqrt(w/ω) and Var X = 1/2. Euclidean time makes every X an
//! Ornstein-Uhlenbeck process with correlation e^{-ω|t-s|}.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::eigh_real;
use crate::rng::{self, PathRng};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [f64; 3],
    pub w: f64,
    pub omega: f64,
    pub phi_hat: f64,
}

impl Mode {
    pub fn k_norm(&self) -> f64 {
        norm(&self.k)
    }

    /// Amplitude c = φ̂ sqrt(w/ω) of the real oscillators.
    pub fn amplitude(&self) -> f64 {
        self.phi_hat * (self.w / self.omega).sqrt()
    }

    /// w φ̂² / ω, the common prefactor of all covariances.
    fn strength(&self) -> f64 {
        self.w * self.phi_hat * self.phi_hat / self.omega
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldModel {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub modes: Vec<Mode>,
    pub coupling: f64,
    #[serde(default)]
    pub mass: f64,
}

pub fn dispersion(k: &[f64; 3], mass: f64) -> f64 {
    (dot(k, k) + mass * mass).sqrt()
}

impl FieldModel {
    pub fn new(modes: Vec<Mode>, coupling: f64, mass: f64) -> Result<Self> {
        let m = FieldModel { schema_version: SCHEMA_VERSION, modes, coupling, mass };
        m.validate()?;
        Ok(m)
    }

    /// One mode with ω = sqrt(|k|² + m²).
    pub fn single_mode(k: [f64; 3], w: f64, phi_hat: f64, coupling: f64, mass: f64) -> Result<Self> {
        let omega = dispersion(&k, mass);
        Self::new(vec![Mode { k, w, omega, phi_hat }], coupling, mass)
    }

    pub fn with_coupling(&self, e: f64) -> Self {
        FieldModel { coupling: e, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Model(format!("unsupported schema version {}", self.schema_version)));
        }
        if !(self.mass >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::Model("mass must be >= 0 and coupling finite".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.k_norm() > 0.0 && m.k.iter().all(|x| x.is_finite())) {
                return Err(Error::Model(format!("mode {i}: k must be a finite nonzero vector")));
            }
            if !(m.w > 0.0 && m.w.is_finite()) {
                return Err(Error::Model(format!("mode {i}: weight must be positive")));
            }
            if !(m.omega > 0.0 && m.phi_hat.is_finite()) {
                return Err(Error::Model(format!("mode {i}: omega must be positive")));
            }
            let expected = dispersion(&m.k, self.mass);
            if (m.omega - expected).abs() > 1e-9 * expected {
                return Err(Error::Model(format!(
                    "mode {i}: omega {} differs from sqrt(|k|² + m²) = {expected}",
                    m.omega
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: FieldModel = serde_json::from_str(s).map_err(|e| Error::Config {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of real oscillators, four per mode.
    pub fn n_oscillators(&self) -> usize {
        4 * self.modes.len()
    }

    /// Σ w φ̂² |k|² / ω.
    pub fn b_strength(&self) -> f64 {
        self.modes.iter().map(|m| m.strength() * dot(&m.k, &m.k)).sum()
    }

    /// Σ w |k| φ̂², the squared norm of sqrt(|k|) φ̂.
    pub fn k_phi_norm_sq(&self) -> f64 {
        self.modes.iter().map(|m| m.w * m.k_norm() * m.phi_hat * m.phi_hat).sum()
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Levi-Civita symbol on 0-based indices.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Right-handed transverse pair (e(k,-1), e(k,+1)) and projector D(k).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizationDyad {
    pub e: [[f64; 3]; 2],
    pub d: [[f64; 3]; 3],
}

impl PolarizationDyad {
    /// e(k,-1) = k×ẑ/|k×ẑ|, e(k,+1) = k̂×e(k,-1); (x̂, ŷ) when k ∥ ẑ.
    pub fn new(k: &[f64; 3]) -> Self {
        let kn = norm(k);
        let khat = scale(k, 1.0 / kn);
        let kz = cross(k, &[0.0, 0.0, 1.0]);
        let (em, ep) = if norm(&kz) <= 1e-14 * kn {
            // k ∥ ẑ; keep the frame right-handed for either sign of k3
            if k[2] > 0.0 {
                ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
            } else {
                ([0.0, 1.0, 0.0], [1.0, 0.0, 0.0])
            }
        } else {
            let em = scale(&kz, 1.0 / norm(&kz));
            (em, cross(&khat, &em))
        };
        Self::from_pair(k, [em, ep])
    }

    fn from_pair(k: &[f64; 3], e: [[f64; 3]; 2]) -> Self {
        let kn2 = dot(k, k);
        let mut d = [[0.0; 3]; 3];
        for mu in 0..3 {
            for nu in 0..3 {
                d[mu][nu] = if mu == nu { 1.0 } else { 0.0 } - k[mu] * k[nu] / kn2;
            }
        }
        PolarizationDyad { e, d }
    }

    /// Rotate the pair by `angle` inside the transverse plane.
    pub fn rotated(&self, k: &[f64; 3], angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let [a, b] = self.e;
        let r = |x: f64, y: f64| x * c + y * s;
        let em = [r(a[0], b[0]), r(a[1], b[1]), r(a[2], b[2])];
        let ep = [-a[0] * s + b[0] * c, -a[1] * s + b[1] * c, -a[2] * s + b[2] * c];
        Self::from_pair(k, [em, ep])
    }

    /// Σ_j e_μ(k,j) e_ν(k,j).
    pub fn dyad_sum(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for e in &self.e {
            for mu in 0..3 {
                for nu in 0..3 {
                    out[mu][nu] += e[mu] * e[nu];
                }
            }
        }
        out
    }
}

pub fn polarization(k: &[f64; 3]) -> PolarizationDyad {
    PolarizationDyad::new(k)
}

fn phase(k: &[f64; 3], x: &[f64; 3], y: &[f64; 3]) -> f64 {
    k[0] * (x[0] - y[0]) + k[1] * (x[1] - y[1]) + k[2] * (x[2] - y[2])
}

/// Cov[A_μ(s,x), A_ν(t,y)] = (1/2) Σ w φ̂²/ω D_μν cos(k·(x-y)) e^{-|t-s|ω}.
pub fn a_covariance(mu: usize, nu: usize, s: f64, x: &[f64; 3], t: f64, y: &[f64; 3], model: &FieldModel) -> f64 {
    let dt = (t - s).abs();
    let mut acc = 0.0;
    for m in &model.modes {
        let kn2 = dot(&m.k, &m.k);
        let d = if mu == nu { 1.0 } else { 0.0 } - m.k[mu] * m.k[nu] / kn2;
        acc += m.strength() * d * phase(&m.k, x, y).cos() * (-dt * m.omega).exp();
    }
    0.5 * acc
}

/// Cov[B_μ(s,x), B_ν(t,y)]: the A kernel with an extra |k|².
pub fn b_covariance(mu: usize, nu: usize, s: f64, x: &[f64; 3], t: f64, y: &[f64; 3], model: &FieldModel) -> f64 {
    let dt = (t - s).abs();
    let mut acc = 0.0;
    for m in &model.modes {
        let kn2 = dot(&m.k, &m.k);
        let d = kn2 * if mu == nu { 1.0 } else { 0.0 } - m.k[mu] * m.k[nu];
        acc += m.strength() * d * phase(&m.k, x, y).cos() * (-dt * m.omega).exp();
    }
    0.5 * acc
}

/// Cov[A_μ(s,x), B_ν(t,y)] = (1/2) Σ w φ̂²/ω ε_μνλ k_λ sin(k·(x-y)) e^{-|t-s|ω}.
/// Zero at coinciding points.
pub fn ab_covariance(mu: usize, nu: usize, s: f64, x: &[f64; 3], t: f64, y: &[f64; 3], model: &FieldModel) -> f64 {
    let dt = (t - s).abs();
    let mut acc = 0.0;
    for m in &model.modes {
        let eps_k: f64 = (0..3).map(|l| levi_civita(mu, nu, l) * m.k[l]).sum();
        acc += m.strength() * eps_k * phase(&m.k, x, y).sin() * (-dt * m.omega).exp();
    }
    0.5 * acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    A,
    B,
    /// A single real oscillator coordinate; `component` is its index.
    Osc,
}

/// One Gaussian coordinate: a field component at (time, position).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldObservable {
    pub kind: FieldKind,
    pub component: usize,
    pub time: f64,
    pub pos: [f64; 3],
}

impl FieldObservable {
    pub fn a(component: usize, time: f64, pos: [f64; 3]) -> Self {
        FieldObservable { kind: FieldKind::A, component, time, pos }
    }

    pub fn b(component: usize, time: f64, pos: [f64; 3]) -> Self {
        FieldObservable { kind: FieldKind::B, component, time, pos }
    }
}

pub fn observable_covariance(p: &FieldObservable, q: &FieldObservable, model: &FieldModel) -> f64 {
    use FieldKind::*;
    let (i, j) = (p.component, q.component);
    match (p.kind, q.kind) {
        (A, A) => a_covariance(i, j, p.time, &p.pos, q.time, &q.pos, model),
        (B, B) => b_covariance(i, j, p.time, &p.pos, q.time, &q.pos, model),
        (A, B) => ab_covariance(i, j, p.time, &p.pos, q.time, &q.pos, model),
        (B, A) => ab_covariance(j, i, q.time, &q.pos, p.time, &p.pos, model),
        (Osc, Osc) => {
            if i == j {
                0.5 * (-(p.time - q.time).abs() * model.modes[i / 4].omega).exp()
            } else {
                0.0
            }
        }
        (Osc, _) => osc_cross(i, p.time, q, model),
        (_, Osc) => osc_cross(j, q.time, p, model),
    }
}

fn osc_cross(o: usize, s: f64, q: &FieldObservable, model: &FieldModel) -> f64 {
    let pols = default_polarizations(model);
    let c = observable_coefficients(q.kind, q.component, &q.pos, model, &pols)[o];
    0.5 * c * (-(s - q.time).abs() * model.modes[o / 4].omega).exp()
}

/// Ordered list of observables needed by one path evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldObservableSet {
    pub items: Vec<FieldObservable>,
}

impl FieldObservableSet {
    pub fn covariance_matrix(&self, model: &FieldModel) -> Array2<f64> {
        let n = self.items.len();
        let mut c = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = observable_covariance(&self.items[i], &self.items[j], model);
                c[[i, j]] = v;
                c[[j, i]] = v;
            }
        }
        c
    }
}

/// One joint draw by spectral factorization of the assembled covariance.
/// Eigenvalues below -1e-12 ‖C‖ are a model error; smaller negative ones
/// are clipped to zero.
pub fn sample_field(observables: &FieldObservableSet, model: &FieldModel, seed: u64) -> Result<Vec<f64>> {
    sample_field_with(observables, model, &mut rng::from_seed(seed))
}

pub fn sample_field_with(observables: &FieldObservableSet, model: &FieldModel, rng: &mut PathRng) -> Result<Vec<f64>> {
    let n = observables.items.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let c = observables.covariance_matrix(model);
    let norm = c.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let (vals, vecs) = eigh_real(&c)?;
    let tol = 1e-12 * norm.max(f64::MIN_POSITIVE);
    if let Some(bad) = vals.iter().find(|&&l| l < -tol) {
        return Err(Error::Model(format!("covariance eigenvalue {bad:e} below -{tol:e}")));
    }
    let z: Vec<f64> = (0..n).map(|j| vals[j].max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
    Ok((0..n).map(|i| (0..n).map(|j| vecs[[i, j]] * z[j]).sum()).collect())
}

/// Oscillator index layout: 4·mode + 2·pol + (0 for cos, 1 for sin),
/// pol 0 meaning e(k,-1) and pol 1 meaning e(k,+1).
pub fn oscillator_index(mode: usize, pol: usize, sin: bool) -> usize {
    4 * mode + 2 * pol + sin as usize
}

/// Coefficients of a field component at x in the real oscillators.
pub fn observable_coefficients(kind: FieldKind, component: usize, x: &[f64; 3], model: &FieldModel, pols: &[PolarizationDyad]) -> Vec<f64> {
    let mut out = vec![0.0; model.n_oscillators()];
    if kind == FieldKind::Osc {
        out[component] = 1.0;
        return out;
    }
    for (m, (mode, pol)) in model.modes.iter().zip(pols).enumerate() {
        let c = mode.amplitude();
        let (s, co) = dot(&mode.k, x).sin_cos();
        for j in 0..2 {
            match kind {
                FieldKind::A => {
                    let e = pol.e[j][component];
                    out[oscillator_index(m, j, false)] = c * e * co;
                    out[oscillator_index(m, j, true)] = c * e * s;
                }
                FieldKind::B => {
                    let ke = cross(&mode.k, &pol.e[j])[component];
                    out[oscillator_index(m, j, false)] = -c * ke * s;
                    out[oscillator_index(m, j, true)] = c * ke * co;
                }
                FieldKind::Osc => unreachable!(),
            }
        }
    }
    out
}

pub fn default_polarizations(model: &FieldModel) -> Vec<PolarizationDyad> {
    model.modes.iter().map(|m| PolarizationDyad::new(&m.k)).collect()
}

/// Samples the real oscillators as independent stationary OU processes at
/// arbitrary times and combines them into observables. Exact in law and
/// linear in the number of observables.
pub struct ModeSampler {
    pub pols: Vec<PolarizationDyad>,
    omegas: Vec<f64>,
}

impl ModeSampler {
    pub fn new(model: &FieldModel) -> Self {
        ModeSampler {
            pols: default_polarizations(model),
            omegas: model.modes.iter().flat_map(|m| [m.omega; 4]).collect(),
        }
    }

    /// Oscillator values at each time of `times` (any order), one row per
    /// time, each row of length n_oscillators.
    pub fn sample_oscillators(&self, times: &[f64], rng: &mut PathRng) -> Vec<Vec<f64>> {
        let n_osc = self.omegas.len();
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut out = vec![vec![0.0; n_osc]; times.len()];
        let sd = std::f64::consts::FRAC_1_SQRT_2;
        let mut prev: Option<(f64, Vec<f64>)> = None;
        for &idx in &order {
            let t = times[idx];
            let row: Vec<f64> = match &prev {
                None => (0..n_osc).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect(),
                Some((t0, x0)) => (0..n_osc)
                    .map(|o| {
                        let rho = (-(t - t0) * self.omegas[o]).exp();
                        let z: f64 = rng.sample(StandardNormal);
                        rho * x0[o] + sd * (1.0 - rho * rho).max(0.0).sqrt() * z
                    })
                    .collect(),
            };
            out[idx] = row.clone();
            prev = Some((t, row));
        }
        out
    }

    pub fn sample(&self, set: &FieldObservableSet, model: &FieldModel, rng: &mut PathRng) -> Vec<f64> {
        let times: Vec<f64> = set.items.iter().map(|o| o.time).collect();
        let osc = self.sample_oscillators(&times, rng);
        set.items
            .iter()
            .zip(&osc)
            .map(|(o, x)| {
                let c = observable_coefficients(o.kind, o.component, &o.pos, model, &self.pols);
                c.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }
}

fn embed(x: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(x) {
        *o = *v;
    }
    out
}

/// q1(ϱ,ϱ) for ϱ = ⊕_μ ∫ j_s λ(· - B_s) dB_s^μ, discretized at the same
/// Stratonovich midpoints (time and position) used by the y1 term, so that
/// E[e^{-ie Σ A·ΔB}] = e^{-(e²/2) q1} holds exactly for the discrete sum.
pub fn pair_interaction_energy(path: &crate::process::ParticlePath, model: &FieldModel) -> f64 {
    let n = path.grid.n_steps();
    let dt = path.grid.dt();
    let mids: Vec<([f64; 3], [f64; 3], f64)> = (0..n)
        .map(|i| (embed(&path.midpoint(i)), embed(path.increment(i)), (i as f64 + 0.5) * dt))
        .collect();
    let mut acc = 0.0;
    for (xi, dbi, ti) in &mids {
        for (xj, dbj, tj) in &mids {
            for mu in 0..path.dim {
                for nu in 0..path.dim {
                    acc += dbi[mu] * a_covariance(mu, nu, *ti, xi, *tj, xj, model) * dbj[nu];
                }
            }
        }
    }
    acc
}

/// c1 = exp((e/2)² t² Σ w φ̂² |k|²/ω). The path and spin do not enter.
pub fn bound_c1(_path: &crate::process::ParticlePath, _spin: &crate::process::SpinPath, model: &FieldModel, t: f64) -> f64 {
    c1_value(model, t)
}

pub fn c1_value(model: &FieldModel, t: f64) -> f64 {
    let e = model.coupling;
    (0.25 * e * e * t * t * model.b_strength()).exp()
}

/// c2 = (|e|/√2)^{2N} Σ_{m<=N} ε^{2(N-m)} 4^m m! (Σ w |k| φ̂²)^m, as printed.
pub fn bound_c2(model: &FieldModel, eps: f64, n_jumps: usize) -> f64 {
    let e2 = model.coupling * model.coupling;
    let kk = model.k_phi_norm_sq();
    let mut sum = 0.0;
    let mut fact = 1.0;
    for m in 0..=n_jumps {
        if m > 0 {
            fact *= m as f64;
        }
        sum += eps.powi(2 * (n_jumps - m) as i32) * 4f64.powi(m as i32) * fact * kk.powi(m as i32);
    }
    (0.5 * e2).powi(n_jumps as i32) * sum
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summability {
    pub value: f64,
    pub terms_used: usize,
    pub last_term: f64,
    pub finite: bool,
}

/// Right-hand side of the E[c^{1/2}] estimate, summed over N until the
/// terms drop below `tol` relative to the partial sum.
pub fn mot_summability(model: &FieldModel, eps: f64, t: f64, tol: f64, max_terms: usize) -> Summability {
    let e = model.coupling.abs();
    let kk = model.k_phi_norm_sq();
    let pre = (0.5 * (0.5 * e).powi(2) * t * t * kk).exp() * (-t).exp();
    let mut value = 0.0;
    let mut last_term = f64::INFINITY;
    let mut used = 0;
    let mut ln_nfact = 0.0;
    for n in 0..max_terms {
        if n > 0 {
            ln_nfact += (n as f64).ln();
        }
        let mut inner = 0.0;
        let mut ln_mfact = 0.0;
        for m in 0..=n {
            if m > 0 {
                ln_mfact += (m as f64).ln();
            }
            let eps_part = if n > m { (n - m) as f64 * eps.ln() } else { 0.0 };
            let k_part = if m > 0 { m as f64 * (2.0f64.ln() + 0.5 * kk.ln()) } else { 0.0 };
            let ln_term = eps_part + 0.5 * ln_mfact + k_part;
            inner += ln_term.exp();
        }
        let ln_pref = if e > 0.0 { n as f64 * (e / 2f64.sqrt()).ln() } else if n == 0 { 0.0 } else { f64::NEG_INFINITY };
        let term = pre * (ln_pref - ln_nfact).exp() * inner;
        value += term;
        used = n + 1;
        last_term = term;
        if n > 2 && term <= tol * value {
            break;
        }
    }
    Summability { value, terms_used: used, last_term, finite: value.is_finite() && last_term <= tol * value.max(f64::MIN_POSITIVE) }
}

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Quadrature("zero nodes".into()));
    }
    let mut j = Array2::<f64>::zeros((n, n));
    for i in 1..n {
        let b = (i as f64).sqrt();
        j[[i, i - 1]] = b;
        j[[i - 1, i]] = b;
    }
    let (nodes, vecs) = eigh_real(&j)?;
    let weights = (0..n).map(|i| vecs[[0, i]] * vecs[[0, i]]).collect();
    Ok((nodes.to_vec(), weights))
}

/// Probabilists' Hermite polynomials He_0..He_deg at x.
pub fn hermite_he(deg: usize, x: f64) -> Vec<f64> {
    let mut h = vec![1.0; deg + 1];
    if deg >= 1 {
        h[1] = x;
    }
    for n in 2..=deg {
        h[n] = x * h[n - 1] - (n - 1) as f64 * h[n - 2];
    }
    h
}

/// Polynomial in one standard Gaussian variable, in the He basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitePoly {
    pub coeffs: Vec<f64>,
}

impl HermitePoly {
    pub fn eval(&self, x: f64) -> f64 {
        let h = hermite_he(self.coeffs.len().saturating_sub(1), x);
        self.coeffs.iter().zip(h).map(|(a, b)| a * b).sum()
    }

    /// Γ(c) acts as c^n on He_n.
    pub fn second_quantized(&self, c: f64) -> Self {
        HermitePoly { coeffs: self.coeffs.iter().enumerate().map(|(n, a)| a * c.powi(n as i32)).collect() }
    }
}

/// (Γ(c)Φ)(x) = E[Φ(c x + sqrt(1 - c²) Z)], the Mehler kernel, by
/// Gauss-Hermite quadrature in Z.
pub fn mehler_apply(phi: &dyn Fn(f64) -> f64, c: f64, x: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let s = (1.0 - c * c).max(0.0).sqrt();
    rule.0.iter().zip(&rule.1).map(|(z, w)| w * phi(c * x + s * z)).sum()
}

/// ‖f‖_p under the standard normal law by quadrature.
pub fn lp_norm(f: &dyn Fn(f64) -> f64, p: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(*x).abs().powf(p)).sum();
    s.powf(1.0 / p)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypercontractivityReport {
    pub pass: bool,
    pub trials: usize,
    pub violations: usize,
    /// Largest ‖Γ(c)Φ‖_p / ‖Φ‖_q seen.
    pub max_ratio: f64,
    pub c: f64,
    pub p: f64,
    pub q: f64,
}

/// e^{-tm}, the contraction parameter of e^{-t dΓ(ω)} restricted to one
/// massive mode. Requires m > 0.
pub fn mehler_parameter(mass: f64, t: f64) -> Result<f64> {
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter("hypercontractivity needs mass > 0".into()));
    }
    Ok((-t * mass).exp())
}

/// Checks ‖Γ(c)Φ‖_p <= ‖Φ‖_q for random polynomials of degree <= max_degree.
/// Γ(c) is applied through the Mehler kernel; both norms use Gauss-Hermite
/// quadrature, which is verified against a rule of twice the size.
pub fn hypercontractivity_check(c: f64, p: f64, q: f64, trials: usize, max_degree: usize, seed: u64) -> Result<HypercontractivityReport> {
    if !(0.0..=1.0).contains(&c) || !(1.0 <= q && q <= p) {
        return Err(Error::InvalidParameter(format!("need 0 <= c <= 1 and 1 <= q <= p, got c={c}, p={p}, q={q}")));
    }
    if p > 1.0 && c * c > (q - 1.0) / (p - 1.0) + 1e-15 {
        return Err(Error::InvalidParameter("c² exceeds (q-1)/(p-1)".into()));
    }
    const TOL: f64 = 1e-8;
    let deg_total = ((p.ceil() as usize) * max_degree).max(2);
    let n = (deg_total / 2 + 8).max(64);
    let rule = gauss_hermite(n)?;
    let rule2 = gauss_hermite(2 * n)?;
    let mut rng = rng::substream(seed, rng::Purpose::Aux, 0, 0);
    let mut violations = 0;
    let mut max_ratio = 0.0_f64;
    for _ in 0..trials {
        let deg = rng.random_range(0..=max_degree);
        let coeffs: Vec<f64> = (0..=deg).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let poly = HermitePoly { coeffs };
        let phi = |x: f64| poly.eval(x);
        let gphi = |x: f64| mehler_apply(&phi, c, x, &rule);
        let lhs = lp_norm(&gphi, p, &rule);
        let rhs = lp_norm(&phi, q, &rule);
        let lhs2 = lp_norm(&|x| mehler_apply(&phi, c, x, &rule2), p, &rule2);
        let rhs2 = lp_norm(&phi, q, &rule2);
        let scale = rhs.abs().max(1e-300);
        if (lhs - lhs2).abs() > 1e-10 * scale.max(lhs) || (rhs - rhs2).abs() > 1e-10 * scale {
            return Err(Error::Quadrature(format!("norms moved by more than 1e-10 between {n} and {} nodes", 2 * n)));
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
        if lhs > rhs * (1.0 + TOL) + TOL {
            violations += 1;
        }
    }
    Ok(HypercontractivityReport { pass: violations == 0, trials, violations, max_ratio, c, p, q })
}

/// Unit-normalized Gaussian density helper used in tests and reports.
pub fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oblique() -> FieldModel {
        FieldModel::single_mode([0.6, 0.0, 0.8], 0.3, 1.2, 0.5, 0.0).unwrap()
    }

    #[test]
    fn polarization_frame_is_right_handed() {
        for k in [[0.6, 0.0, 0.8], [0.0, 0.0, 2.0], [0.0, 0.0, -1.0], [1.0, -2.0, 0.3]] {
            let p = PolarizationDyad::new(&k);
            let kh = scale(&k, 1.0 / norm(&k));
            let c = cross(&p.e[0], &p.e[1]);
            for mu in 0..3 {
                assert!((c[mu] - kh[mu]).abs() < 1e-14);
            }
            let s = p.dyad_sum();
            for mu in 0..3 {
                for nu in 0..3 {
                    assert!((s[mu][nu] - p.d[mu][nu]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn coincident_a_variance() {
        let m = oblique();
        let x = [0.1, 0.2, 0.3];
        let v = a_covariance(0, 0, 1.0, &x, 1.0, &x, &m);
        let md = &m.modes[0];
        let expect = 0.5 * md.w * md.phi_hat.powi(2) / md.omega * (1.0 - 0.36);
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn single_mode_b_covariance_by_hand() {
        let m = oblique();
        let md = &m.modes[0];
        let x = [0.0; 3];
        let v = b_covariance(0, 2, 0.0, &x, 0.0, &x, &m);
        let expect = md.w * md.phi_hat.powi(2) * 1.0 * (-0.6 * 0.8) / (2.0 * md.omega);
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn ab_covariance_vanishes_at_a_point() {
        let m = oblique();
        let x = [0.3, -0.1, 0.7];
        for mu in 0..3 {
            for nu in 0..3 {
                assert_eq!(ab_covariance(mu, nu, 0.2, &x, 0.5, &x, &m), 0.0);
            }
        }
    }

    #[test]
    fn oscillator_route_reproduces_covariances() {
        let m = FieldModel::new(
            vec![
                Mode { k: [0.6, 0.0, 0.8], w: 0.3, omega: 1.0, phi_hat: 1.2 },
                Mode { k: [-1.0, 2.0, 0.5], w: 0.1, omega: dispersion(&[-1.0, 2.0, 0.5], 0.0), phi_hat: 0.7 },
            ],
            0.5,
            0.0,
        )
        .unwrap();
        let pols = default_polarizations(&m);
        let (x, y) = ([0.2, -0.4, 1.1], [-0.3, 0.5, 0.2]);
        let (s, t) = (0.3, 1.0);
        for (ka, kb) in [(FieldKind::A, FieldKind::A), (FieldKind::B, FieldKind::B), (FieldKind::A, FieldKind::B), (FieldKind::B, FieldKind::A)] {
            for mu in 0..3 {
                for nu in 0..3 {
                    let cx = observable_coefficients(ka, mu, &x, &m, &pols);
                    let cy = observable_coefficients(kb, nu, &y, &m, &pols);
                    let via_osc: f64 = (0..m.n_oscillators())
                        .map(|o| cx[o] * cy[o] * 0.5 * (-(t - s) * m.modes[o / 4].omega).exp())
                        .sum();
                    let p = FieldObservable { kind: ka, component: mu, time: s, pos: x };
                    let q = FieldObservable { kind: kb, component: nu, time: t, pos: y };
                    let direct = observable_covariance(&p, &q, &m);
                    assert!((via_osc - direct).abs() < 1e-13, "{ka:?}{kb:?} {mu}{nu}: {via_osc} vs {direct}");
                }
            }
        }
    }

    #[test]
    fn bounds_trivial_cases() {
        let m = oblique().with_coupling(0.0);
        let g = crate::process::TimeGrid::new(1.0, 2).unwrap();
        let p = crate::process::sample_brownian(&[0.0; 3], g, 0);
        let s = crate::process::SpinPath::new(1, crate::process::JumpRecord::new(1.0, 1.0, vec![]).unwrap()).unwrap();
        assert_eq!(bound_c1(&p, &s, &m, 1.0), 1.0);
        assert_eq!(bound_c1(&p, &s, &oblique(), 0.0), 1.0);
        assert_eq!(bound_c2(&m, 0.3, 0), 1.0);
        assert_eq!(bound_c2(&m, 0.3, 2), 0.0);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(20).unwrap();
        let m = |p: i32| x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(6) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn mehler_kernel_scales_hermite_polynomials() {
        let rule = gauss_hermite(40).unwrap();
        let poly = HermitePoly { coeffs: vec![0.3, -1.0, 0.5, 2.0, 0.0, -0.7] };
        let c = 0.6;
        let scaled = poly.second_quantized(c);
        for x in [-2.0, -0.3, 0.0, 1.1, 2.5] {
            let a = mehler_apply(&|y| poly.eval(y), c, x, &rule);
            assert!((a - scaled.eval(x)).abs() < 1e-10);
        }
    }
}
