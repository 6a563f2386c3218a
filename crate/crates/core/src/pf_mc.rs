//! Pauli-Fierz path integrals at finite mode number.
//!
//! For a sampled (Brownian path, spin path) the field enters through the
//! Gaussian coordinates listed by [`path_observables`]: A at the
//! Stratonovich midpoints, B3 at the grid nodes and B1, B2 at the jump
//! times. Test vectors with photons add the raw oscillator coordinates at
//! times 0 and t.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::estimate::{run_paths, McEstimate};
use crate::field::{
    default_polarizations, observable_coefficients, sample_field_with, FieldKind, FieldModel, FieldObservable,
    FieldObservableSet, ModeSampler, PolarizationDyad,
};
use crate::pauli_fk::{psi_eps, GaussianProposal};
use crate::process::{sample_brownian_with, sample_spin_path_with, ParticlePath, Spin, SpinPath, TimeGrid};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn embed(x: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (o, v) in out.iter_mut().zip(x) {
        *o = *v;
    }
    out
}

/// Index map of the observables of one path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLayout {
    pub n_steps: usize,
    pub n_jumps: usize,
    pub n_osc: usize,
    pub with_osc: bool,
}

impl PathLayout {
    pub fn a(&self, i: usize, mu: usize) -> usize {
        3 * i + mu
    }
    pub fn b3(&self, i: usize) -> usize {
        3 * self.n_steps + i
    }
    pub fn b12(&self, j: usize, c: usize) -> usize {
        4 * self.n_steps + 2 * j + c
    }
    pub fn osc0(&self, o: usize) -> usize {
        4 * self.n_steps + 2 * self.n_jumps + o
    }
    pub fn osct(&self, o: usize) -> usize {
        self.osc0(o) + self.n_osc
    }
    pub fn len(&self) -> usize {
        4 * self.n_steps + 2 * self.n_jumps + if self.with_osc { 2 * self.n_osc } else { 0 }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn path_observables(path: &ParticlePath, spin: &SpinPath, model: &FieldModel, with_osc: bool) -> (FieldObservableSet, PathLayout) {
    let n = path.grid.n_steps();
    let dt = path.grid.dt();
    let layout = PathLayout { n_steps: n, n_jumps: spin.jumps.total(), n_osc: model.n_oscillators(), with_osc };
    let mut items = Vec::with_capacity(layout.len());
    for i in 0..n {
        let x = embed(&path.midpoint(i));
        let s = (i as f64 + 0.5) * dt;
        for mu in 0..3 {
            items.push(FieldObservable::a(mu, s, x));
        }
    }
    for i in 0..n {
        items.push(FieldObservable::b(2, path.grid.node(i), embed(path.position(i))));
    }
    for &s in &spin.jumps.jump_times {
        let x = embed(&path.position_at(s));
        items.push(FieldObservable::b(0, s, x));
        items.push(FieldObservable::b(1, s, x));
    }
    if with_osc {
        let t = path.grid.t_max();
        for o in 0..layout.n_osc {
            items.push(FieldObservable { kind: FieldKind::Osc, component: o, time: 0.0, pos: [0.0; 3] });
        }
        for o in 0..layout.n_osc {
            items.push(FieldObservable { kind: FieldKind::Osc, component: o, time: t, pos: [0.0; 3] });
        }
    }
    (FieldObservableSet { items }, layout)
}

/// X_t(ε) = y1 + y2 + y3.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PfExponent {
    /// -ie Σ A·ΔB, purely imaginary.
    pub y1: C64,
    /// (e/2) Σ σ B3 Δt.
    pub y2: f64,
    /// Σ over jumps of the log jump weight.
    pub y3: C64,
}

impl PfExponent {
    pub fn total(&self) -> C64 {
        self.y1 + self.y2 + self.y3
    }
}

/// 𝒪 = -(e/2)(B1 - iσB2) with σ the spin before the jump.
pub fn jump_o(e: f64, b1: C64, b2: C64, sigma_before: Spin) -> C64 {
    -0.5 * e * (b1 - I * (sigma_before as f64) * b2)
}

/// -𝒪 - εψ_ε(𝒪).
pub fn full_jump_factor(o: C64, eps: f64) -> C64 {
    if eps > 0.0 {
        -o - eps * psi_eps(o, eps)
    } else {
        -o
    }
}

/// |𝒪| + εψ_ε(|𝒪|).
pub fn perp_jump_factor(o: C64, eps: f64) -> f64 {
    let a = o.norm();
    if eps > 0.0 {
        a + eps * psi_eps(C64::new(a, 0.0), eps)
    } else {
        a
    }
}

fn y1_of(e: f64, path: &ParticlePath, layout: &PathLayout, draw: &[f64]) -> C64 {
    let mut acc = 0.0;
    for i in 0..layout.n_steps {
        for (mu, db) in path.increment(i).iter().enumerate().take(3) {
            acc += draw[layout.a(i, mu)] * db;
        }
    }
    C64::new(0.0, -e * acc)
}

fn y2_of(e: f64, path: &ParticlePath, spin: &SpinPath, layout: &PathLayout, vals: &dyn Fn(usize) -> C64) -> C64 {
    let spins = crate::integrators::node_spins(path, spin);
    let mut acc = ZERO;
    for (i, s) in spins.iter().enumerate() {
        acc += (*s as f64) * vals(layout.b3(i));
    }
    0.5 * e * acc * path.grid.dt()
}

fn y3_full(e: f64, eps: f64, spin: &SpinPath, layout: &PathLayout, vals: &dyn Fn(usize) -> C64) -> Result<C64> {
    let mut acc = ZERO;
    for j in 0..layout.n_jumps {
        let o = jump_o(e, vals(layout.b12(j, 0)), vals(layout.b12(j, 1)), spin.before_jump(j));
        let w = full_jump_factor(o, eps);
        if w == ZERO || !w.is_finite() {
            return Err(Error::PathFailure { time: spin.jumps.jump_times[j], reason: format!("jump weight {w}") });
        }
        acc += w.ln();
    }
    Ok(acc)
}

fn y3_perp(e: f64, eps: f64, spin: &SpinPath, layout: &PathLayout, draw: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..layout.n_jumps {
        let o = jump_o(e, draw[layout.b12(j, 0)].into(), draw[layout.b12(j, 1)].into(), spin.before_jump(j));
        let w = perp_jump_factor(o, eps);
        if !(w > 0.0) {
            return Err(Error::PathFailure { time: spin.jumps.jump_times[j], reason: format!("jump weight {w}") });
        }
        acc += w.ln();
    }
    Ok(acc)
}

/// X_t(ε) for one (path, spin, field draw); the draw follows
/// `path_observables(path, spin, model, false)`.
pub fn x_exponent(eps: f64, path: &ParticlePath, spin: &SpinPath, field_draw: &[f64], model: &FieldModel) -> Result<PfExponent> {
    let (_, layout) = path_observables_layout(path, spin, model);
    check_draw(&layout, field_draw)?;
    let e = model.coupling;
    let vals = |k: usize| C64::new(field_draw[k], 0.0);
    Ok(PfExponent {
        y1: y1_of(e, path, &layout, field_draw),
        y2: y2_of(e, path, spin, &layout, &vals).re,
        y3: y3_full(e, eps, spin, &layout, &vals)?,
    })
}

/// X_t^⊥(ε): no vector potential, jump weights |𝒪| + εψ_ε(|𝒪|).
pub fn x_perp_exponent(eps: f64, path: &ParticlePath, spin: &SpinPath, field_draw: &[f64], model: &FieldModel) -> Result<PfExponent> {
    let (_, layout) = path_observables_layout(path, spin, model);
    check_draw(&layout, field_draw)?;
    let e = model.coupling;
    let vals = |k: usize| C64::new(field_draw[k], 0.0);
    Ok(PfExponent {
        y1: ZERO,
        y2: y2_of(e, path, spin, &layout, &vals).re,
        y3: C64::new(y3_perp(e, eps, spin, &layout, field_draw)?, 0.0),
    })
}

fn path_observables_layout(path: &ParticlePath, spin: &SpinPath, model: &FieldModel) -> ((), PathLayout) {
    let layout = PathLayout {
        n_steps: path.grid.n_steps(),
        n_jumps: spin.jumps.total(),
        n_osc: model.n_oscillators(),
        with_osc: false,
    };
    ((), layout)
}

fn check_draw(layout: &PathLayout, draw: &[f64]) -> Result<()> {
    let need = 4 * layout.n_steps + 2 * layout.n_jumps;
    if draw.len() < need {
        return Err(Error::InvalidParameter(format!("field draw has {} values, path needs {need}", draw.len())));
    }
    Ok(())
}

/// Normalized Hermite functions h_n(x) = H_n(x)/sqrt(2^n n!), orthonormal
/// for the N(0, 1/2) law of one oscillator coordinate.
pub fn hermite_h(n: u32, x: C64) -> C64 {
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut h0 = C64::new(1.0, 0.0);
    if n == 0 {
        return h0;
    }
    let mut h1 = sqrt2 * x;
    for m in 1..n {
        let m = m as f64;
        let h2 = (2.0 / (m + 1.0)).sqrt() * x * h1 - (m / (m + 1.0)).sqrt() * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    pub coef: C64,
    /// (oscillator index, occupation) pairs; absent oscillators are empty.
    pub occ: Vec<(usize, u32)>,
}

/// Finite combination of real-oscillator occupation states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub terms: Vec<FieldTerm>,
}

impl FieldState {
    pub fn vacuum() -> Self {
        FieldState { terms: vec![FieldTerm { coef: C64::new(1.0, 0.0), occ: vec![] }] }
    }

    pub fn occupation(occ: Vec<(usize, u32)>) -> Self {
        FieldState { terms: vec![FieldTerm { coef: C64::new(1.0, 0.0), occ }] }
    }

    /// One photon of momentum ±k in polarization `pol` of `mode`:
    /// a_±† = (b_c† ± i b_s†)/√2.
    pub fn photon(mode: usize, pol: usize, plus: bool) -> Self {
        let c = crate::field::oscillator_index(mode, pol, false);
        let s = crate::field::oscillator_index(mode, pol, true);
        let sign = if plus { 1.0 } else { -1.0 };
        FieldState {
            terms: vec![
                FieldTerm { coef: C64::new(FRAC_1_SQRT_2, 0.0), occ: vec![(c, 1)] },
                FieldTerm { coef: C64::new(0.0, sign * FRAC_1_SQRT_2), occ: vec![(s, 1)] },
            ],
        }
    }

    pub fn is_vacuum(&self) -> bool {
        self.terms.iter().all(|t| t.occ.iter().all(|&(_, n)| n == 0))
    }

    pub fn max_oscillator(&self) -> Option<usize> {
        self.terms.iter().flat_map(|t| t.occ.iter().map(|&(o, _)| o)).max()
    }

    pub fn max_total_occupation(&self) -> u32 {
        self.terms.iter().map(|t| t.occ.iter().map(|&(_, n)| n).sum::<u32>()).max().unwrap_or(0)
    }

    /// Q-space function evaluated at oscillator values `x`.
    pub fn eval(&self, x: &dyn Fn(usize) -> C64) -> C64 {
        let mut acc = ZERO;
        for t in &self.terms {
            let mut v = t.coef;
            for &(o, n) in &t.occ {
                v *= hermite_h(n, x(o));
            }
            acc += v;
        }
        acc
    }
}

/// Normalized Gaussian wave packet (2πw²)^{-d/4} exp(-|x-c|²/(4w²) + ip·x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialPart {
    pub center: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub momentum: Vec<f64>,
}

impl SpatialPart {
    pub fn eval(&self, x: &[f64]) -> C64 {
        let d = self.center.len() as f64;
        let w2 = self.width * self.width;
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        let ph: f64 = self.momentum.iter().zip(x).map(|(p, y)| p * y).sum();
        let amp = (2.0 * std::f64::consts::PI * w2).powf(-0.25 * d) * (-r2 / (4.0 * w2)).exp();
        C64::from_polar(amp, ph)
    }

    pub fn proposal(&self, t: f64) -> GaussianProposal {
        GaussianProposal { center: self.center.clone(), sd: (self.width * self.width + t).sqrt() }
    }
}

/// Spinor ⊗ field state, optionally ⊗ a spatial wave packet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVector {
    /// Components for σ = +1 and σ = -1.
    pub spinor: [C64; 2],
    pub field: FieldState,
    #[serde(default)]
    pub spatial: Option<SpatialPart>,
}

pub fn spin_slot(s: Spin) -> usize {
    if s == 1 {
        0
    } else {
        1
    }
}

impl TestVector {
    pub fn vacuum(spinor: [C64; 2]) -> Self {
        TestVector { spinor, field: FieldState::vacuum(), spatial: None }
    }

    pub fn with_spatial(mut self, s: SpatialPart) -> Self {
        self.spatial = Some(s);
        self
    }

    /// Pointwise modulus, used for the perp comparison. Only product
    /// vectors with a single field term are supported.
    pub fn modulus(&self) -> Result<Self> {
        if self.field.terms.len() != 1 || !self.field.is_vacuum() {
            return Err(Error::Unsupported("modulus of a non-vacuum field part".into()));
        }
        let spatial = self.spatial.as_ref().map(|s| SpatialPart { momentum: vec![], ..s.clone() });
        let c = self.field.terms[0].coef.norm();
        Ok(TestVector {
            spinor: [C64::new(self.spinor[0].norm(), 0.0), C64::new(self.spinor[1].norm(), 0.0)],
            field: FieldState { terms: vec![FieldTerm { coef: C64::new(c, 0.0), occ: vec![] }] },
            spatial,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSampler {
    /// Independent OU processes per real oscillator.
    Modes,
    /// Spectral factorization of the assembled covariance.
    Dense,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "modes")]
    pub sampler: FieldSampler,
    #[serde(default)]
    pub analytic_y1: bool,
}

fn one() -> usize {
    1
}

fn modes() -> FieldSampler {
    FieldSampler::Modes
}

impl McConfig {
    pub fn new(n_paths: usize, grid: TimeGrid, seed: u64) -> Self {
        McConfig { n_paths, grid, seed, replicates: 1, sampler: FieldSampler::Modes, analytic_y1: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Full,
    Perp,
    Toy { eps_sf: f64 },
}

/// Covariances of every observable with L = Σ_j A(mid_j)·ΔB_j and Var L,
/// computed through the oscillator representation with O(1) work per
/// observable and oscillator.
fn y1_shift(path: &ParticlePath, set: &FieldObservableSet, layout: &PathLayout, model: &FieldModel, pols: &[PolarizationDyad]) -> (f64, Vec<f64>) {
    let n = layout.n_steps;
    let dt = path.grid.dt();
    let n_osc = model.n_oscillators();
    // a[o][j] = Σ_ν coefA_o(ν, mid_j) ΔB_j^ν
    let mut a = vec![vec![0.0; n]; n_osc];
    for j in 0..n {
        let db = embed(path.increment(j));
        for nu in 0..path.dim.min(3) {
            let c = observable_coefficients(FieldKind::A, nu, &set.items[layout.a(j, nu)].pos, model, pols);
            for o in 0..n_osc {
                a[o][j] += c[o] * db[nu];
            }
        }
    }
    let mut left = vec![vec![0.0; n]; n_osc];
    let mut right = vec![vec![0.0; n]; n_osc];
    for o in 0..n_osc {
        let r = (-model.modes[o / 4].omega * dt).exp();
        let mut acc = 0.0;
        for j in 0..n {
            acc = acc * r + a[o][j];
            left[o][j] = acc;
        }
        acc = 0.0;
        for j in (0..n).rev() {
            acc = acc * r + a[o][j];
            right[o][j] = acc;
        }
    }
    let g = |o: usize, t: f64| -> f64 {
        let w = model.modes[o / 4].omega;
        let u = t / dt - 0.5;
        let jl = if u < 0.0 { None } else { Some((u.floor() as usize).min(n - 1)) };
        let mut v = 0.0;
        match jl {
            Some(j) => {
                let tj = (j as f64 + 0.5) * dt;
                v += (-w * (t - tj)).exp() * left[o][j];
                if j + 1 < n {
                    let tk = (j as f64 + 1.5) * dt;
                    v += (-w * (tk - t)).exp() * right[o][j + 1];
                }
            }
            None => v += (-w * (0.5 * dt - t)).exp() * right[o][0],
        }
        0.5 * v
    };
    let mut var = 0.0;
    for o in 0..n_osc {
        for j in 0..n {
            var += a[o][j] * g(o, (j as f64 + 0.5) * dt);
        }
    }
    let shifts = set
        .items
        .iter()
        .enumerate()
        .map(|(k, it)| {
            if k < 3 * n {
                return 0.0;
            }
            let c = observable_coefficients(it.kind, it.component, &it.pos, model, pols);
            (0..n_osc).map(|o| c[o] * g(o, it.time)).sum()
        })
        .collect();
    (var, shifts)
}

struct Problem<'a> {
    variant: Variant,
    fiber: Option<[f64; 3]>,
    f: &'a TestVector,
    g: &'a TestVector,
    t: f64,
    eps: f64,
    model: &'a FieldModel,
    cfg: &'a McConfig,
    proposal: Option<GaussianProposal>,
}

fn rotate_for_fiber(vals: &mut [C64], b_t: &[f64; 3], model: &FieldModel) {
    for (m, mode) in model.modes.iter().enumerate() {
        let theta = crate::field::dot(&mode.k, b_t);
        let (s, c) = theta.sin_cos();
        for pol in 0..2 {
            let ic = crate::field::oscillator_index(m, pol, false);
            let is = crate::field::oscillator_index(m, pol, true);
            let (xc, xs) = (vals[ic], vals[is]);
            vals[ic] = xc * c + xs * s;
            vals[is] = -xc * s + xs * c;
        }
    }
}

fn run_problem(pb: &Problem) -> Result<McEstimate> {
    let cfg = pb.cfg;
    let t = pb.t;
    if !(t > 0.0) || (cfg.grid.t_max() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive and equal the grid horizon")));
    }
    if cfg.replicates == 0 {
        return Err(Error::InvalidParameter("replicates must be >= 1".into()));
    }
    let n_osc = pb.model.n_oscillators();
    for v in [pb.f, pb.g] {
        if let Some(o) = v.field.max_oscillator() {
            if o >= n_osc {
                return Err(Error::Unsupported(format!("oscillator {o} not in a model with {n_osc}")));
            }
        }
    }
    if pb.fiber.is_some() && (pb.f.spatial.is_some() || pb.g.spatial.is_some()) {
        return Err(Error::InvalidParameter("fiber test vectors have no spatial part".into()));
    }
    if pb.fiber.is_none() && (pb.f.spatial.is_none() || pb.g.spatial.is_none()) {
        return Err(Error::InvalidParameter("full-space test vectors need spatial parts".into()));
    }
    if pb.cfg.analytic_y1 && pb.cfg.sampler != FieldSampler::Modes {
        return Err(Error::Unsupported("analytic y1 uses the oscillator representation".into()));
    }
    let with_osc = !pb.f.field.is_vacuum() || !pb.g.field.is_vacuum();
    let e = pb.model.coupling;
    let modes = ModeSampler::new(pb.model);
    let pols = default_polarizations(pb.model);
    let seed = cfg.seed;
    let reps = cfg.replicates;
    let proposal = match (&pb.proposal, &pb.f.spatial) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(s)) => Some(s.proposal(t)),
        _ => None,
    };
    let dim = pb.f.spatial.as_ref().map(|s| s.center.len()).unwrap_or(3);
    run_paths(cfg.n_paths, seed, |i| {
        let (x, q) = match &proposal {
            None => (vec![0.0; 3], 1.0),
            Some(p) => {
                let mut rp = rng::substream(seed, Purpose::Proposal, i, 0);
                let x = p.sample(&mut rp);
                let q = p.density(&x);
                (x, q)
            }
        };
        if x.len() != dim {
            return Err(Error::InvalidParameter("proposal dimension".into()));
        }
        let fx = pb.f.spatial.as_ref().map(|s| s.eval(&x)).unwrap_or(C64::new(1.0, 0.0));
        let mut acc = ZERO;
        for (r, sigma0) in [1 as Spin, -1].into_iter().enumerate() {
            let cf = (fx * pb.f.spinor[r]).conj();
            if cf == ZERO {
                continue;
            }
            let mut rb = rng::substream(seed, Purpose::Brownian, i, r as u64);
            let mut rj = rng::substream(seed, Purpose::Jumps, i, r as u64);
            let path = sample_brownian_with(&x, cfg.grid, &mut rb);
            let spin = sample_spin_path_with(sigma0, 1.0, t, &mut rj)?;
            let end_spin = spin.at_end();
            let gx = pb.g.spatial.as_ref().map(|s| s.eval(path.end())).unwrap_or(C64::new(1.0, 0.0));
            let cg = gx * pb.g.spinor[spin_slot(end_spin)];
            if cg == ZERO {
                continue;
            }
            let toy_factor = match pb.variant {
                Variant::Toy { eps_sf } => {
                    let n = spin.jumps.total() as i32;
                    if eps_sf == 0.0 && n > 0 {
                        continue;
                    }
                    eps_sf.powi(n)
                }
                _ => 1.0,
            };
            let b_t = embed(path.end());
            let phase = match pb.fiber {
                Some(p) => C64::from_polar(1.0, crate::field::dot(&p, &b_t)),
                None => C64::new(1.0, 0.0),
            };
            let (set, layout) = path_observables(&path, &spin, pb.model, with_osc);
            let shift = if cfg.analytic_y1 { Some(y1_shift(&path, &set, &layout, pb.model, &pols)) } else { None };
            let mut avg = ZERO;
            for rep in 0..reps {
                let mut rf = rng::substream(seed, Purpose::Field, i, (r * reps + rep) as u64);
                let draw = match cfg.sampler {
                    FieldSampler::Modes => modes.sample(&set, pb.model, &mut rf),
                    FieldSampler::Dense => sample_field_with(&set, pb.model, &mut rf)?,
                };
                let vals: Vec<C64> = match &shift {
                    None => draw.iter().map(|&v| C64::new(v, 0.0)).collect(),
                    Some((_, sh)) => draw.iter().zip(sh).map(|(&v, &s)| C64::new(v, -e * s)).collect(),
                };
                let get = |k: usize| vals[k];
                let log_w = match pb.variant {
                    Variant::Full => {
                        let y1 = match &shift {
                            None => y1_of(e, &path, &layout, &draw),
                            Some((var, _)) => C64::new(-0.5 * e * e * var, 0.0),
                        };
                        y1 + y2_of(e, &path, &spin, &layout, &get) + y3_full(e, pb.eps, &spin, &layout, &get)?
                    }
                    Variant::Perp => {
                        y2_of(e, &path, &spin, &layout, &get) + y3_perp(e, pb.eps, &spin, &layout, &draw)?
                    }
                    Variant::Toy { .. } => match &shift {
                        None => y1_of(e, &path, &layout, &draw),
                        Some((var, _)) => C64::new(-0.5 * e * e * var, 0.0),
                    },
                };
                let mut w = log_w.exp();
                if with_osc {
                    let x0 = |o: usize| vals[layout.osc0(o)];
                    let mut xt: Vec<C64> = (0..n_osc).map(|o| vals[layout.osct(o)]).collect();
                    if pb.fiber.is_some() {
                        rotate_for_fiber(&mut xt, &b_t, pb.model);
                    }
                    w *= pb.f.field.eval(&x0).conj() * pb.g.field.eval(&|o| xt[o]);
                } else {
                    w *= pb.f.field.terms[0].coef.conj() * pb.g.field.terms[0].coef;
                }
                avg += w;
            }
            avg /= reps as f64;
            acc += cf * cg * phase * toy_factor * avg;
        }
        Ok(acc * t.exp() / q)
    })
}

/// (F, e^{-tH_PF^ε} G) in full space. F and G need spatial parts; x is
/// drawn from `proposal` or, by default, from a Gaussian of variance
/// width² + t around F's center.
pub fn pf_matrix_element(f: &TestVector, g: &TestVector, t: f64, eps: f64, model: &FieldModel, cfg: &McConfig, proposal: Option<GaussianProposal>) -> Result<McEstimate> {
    run_problem(&Problem { variant: Variant::Full, fiber: None, f, g, t, eps, model, cfg, proposal })
}

/// (F, e^{-tH^⊥} G) for the operator without vector potential and with
/// |𝒪| in place of the spin-flip coupling. Pass |F|, |G| for the
/// comparison with the full matrix element.
pub fn pf_perp_matrix_element(f: &TestVector, g: &TestVector, t: f64, eps: f64, model: &FieldModel, cfg: &McConfig, proposal: Option<GaussianProposal>) -> Result<McEstimate> {
    run_problem(&Problem { variant: Variant::Perp, fiber: None, f, g, t, eps, model, cfg, proposal })
}

/// (Φ, e^{-tH^ε(P)} Ψ) for the fiber at total momentum P.
pub fn fiber_matrix_element(p: [f64; 3], phi: &TestVector, psi: &TestVector, t: f64, eps: f64, model: &FieldModel, cfg: &McConfig) -> Result<McEstimate> {
    run_problem(&Problem { variant: Variant::Full, fiber: Some(p), f: phi, g: psi, t, eps, model, cfg, proposal: None })
}

/// Fiber matrix element of the comparison operator H^⊥(P).
pub fn fiber_perp_matrix_element(p: [f64; 3], phi: &TestVector, psi: &TestVector, t: f64, eps: f64, model: &FieldModel, cfg: &McConfig) -> Result<McEstimate> {
    run_problem(&Problem { variant: Variant::Perp, fiber: Some(p), f: phi, g: psi, t, eps, model, cfg, proposal: None })
}

/// Matrix element of H(ε) = (1/2)(-i∇ - eA)² + H_rad + ε_sf σ_F, or of its
/// fiber H(ε,P) when `p` is given. Each jump carries the weight ε_sf.
#[allow(clippy::too_many_arguments)]
pub fn toy_matrix_element(eps_sf: f64, p: Option<[f64; 3]>, phi: &TestVector, psi: &TestVector, t: f64, model: &FieldModel, cfg: &McConfig, proposal: Option<GaussianProposal>) -> Result<McEstimate> {
    run_problem(&Problem { variant: Variant::Toy { eps_sf }, fiber: p, f: phi, g: psi, t, eps: 0.0, model, cfg, proposal })
}

/// Estimates along the ε sequence used to report the ε → 0 trend.
pub const EPS_SEQUENCE: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

pub fn epsilon_sequence(p: [f64; 3], phi: &TestVector, psi: &TestVector, t: f64, model: &FieldModel, cfg: &McConfig) -> Result<Vec<(f64, McEstimate)>> {
    EPS_SEQUENCE.iter().map(|&eps| Ok((eps, fiber_matrix_element(p, phi, psi, t, eps, model, cfg)?))).collect()
}

/// Draw (path, spin, field) for sample `i` with the fiber conventions
/// (start at 0, spin `sigma0`).
pub fn sample_tuple(model: &FieldModel, grid: TimeGrid, sigma0: Spin, seed: u64, i: u64, replicate: u64) -> Result<(ParticlePath, SpinPath, Vec<f64>)> {
    let mut rb = rng::substream(seed, Purpose::Brownian, i, 0);
    let mut rj = rng::substream(seed, Purpose::Jumps, i, 0);
    let path = sample_brownian_with(&[0.0; 3], grid, &mut rb);
    let spin = sample_spin_path_with(sigma0, 1.0, grid.t_max(), &mut rj)?;
    let (set, _) = path_observables(&path, &spin, model, false);
    let mut rf = rng::substream(seed, Purpose::Field, i, replicate);
    let draw = ModeSampler::new(model).sample(&set, model, &mut rf);
    Ok((path, spin, draw))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest Re X - X⊥ seen (never positive when the bound holds).
    pub max_gap: f64,
}

/// Checks |e^{X_t(ε)}| <= e^{X_t^⊥(ε)} on independent tuples, reusing
/// each draw for both exponents.
pub fn domination_check(model: &FieldModel, eps: f64, grid: TimeGrid, n_samples: usize, seed: u64) -> Result<DominationReport> {
    use rayon::prelude::*;
    let gaps: Vec<Result<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let sigma0 = if i % 2 == 0 { 1 } else { -1 };
            let (path, spin, draw) = sample_tuple(model, grid, sigma0, seed, i, 0)?;
            let x = x_exponent(eps, &path, &spin, &draw, model)?;
            let xp = x_perp_exponent(eps, &path, &spin, &draw, model)?;
            Ok(x.total().re - xp.total().re)
        })
        .collect();
    let mut violations = 0;
    let mut max_gap = f64::NEG_INFINITY;
    for g in gaps {
        let g = g?;
        if g > 0.0 {
            violations += 1;
        }
        max_gap = max_gap.max(g);
    }
    Ok(DominationReport { samples: n_samples, violations, max_gap })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub paths: usize,
    pub replicates: usize,
    /// Paths whose ‖e^X‖_1² exceeds c1 c2(N) even at the lower 4σ end of
    /// its replicate estimate.
    pub violations: usize,
    /// Paths whose point estimate exceeds c1 c2(N).
    pub raw_exceedances: usize,
    /// Largest ‖e^X‖_1² / (c1 c2(N)) over paths, from point estimates.
    pub max_ratio: f64,
    pub c1: f64,
    pub max_jumps: usize,
}

/// Per path, ‖e^{X_t(ε)}‖_1 = E_field |e^{X_t(ε)}| is estimated from
/// `replicates` field draws and its square compared with c1·c2(N_t).
/// Paths without jumps use the exact Gaussian value.
pub fn bound_check(model: &FieldModel, eps: f64, grid: TimeGrid, n_paths: usize, replicates: usize, seed: u64) -> Result<BoundReport> {
    use rayon::prelude::*;
    if replicates < 2 {
        return Err(Error::InvalidParameter("bound check needs at least two replicates".into()));
    }
    let c1 = crate::field::c1_value(model, grid.t_max());
    let modes = ModeSampler::new(model);
    let rows: Vec<Result<(f64, f64, usize)>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let sigma0 = if i % 2 == 0 { 1 } else { -1 };
            let mut rb = rng::substream(seed, Purpose::Brownian, i, 0);
            let mut rj = rng::substream(seed, Purpose::Jumps, i, 0);
            let path = sample_brownian_with(&[0.0; 3], grid, &mut rb);
            let spin = sample_spin_path_with(sigma0, 1.0, grid.t_max(), &mut rj)?;
            let (set, layout) = path_observables(&path, &spin, model, false);
            let n = spin.jumps.total();
            let bound = c1 * crate::field::bound_c2(model, eps, n);
            if n == 0 {
                // Only y2 is real, and E e^{y2} = e^{Var y2 / 2} exactly.
                let items: Vec<_> = (0..layout.n_steps).map(|i| &set.items[layout.b3(i)]).collect();
                let mut var = 0.0;
                for p in &items {
                    for q in &items {
                        var += crate::field::observable_covariance(p, q, model);
                    }
                }
                var *= (0.5 * model.coupling * grid.dt()).powi(2);
                let ratio = var.exp() / bound;
                return Ok((ratio, ratio, 0));
            }
            let mut vals = Vec::with_capacity(replicates);
            for rep in 0..replicates {
                let mut rf = rng::substream(seed, Purpose::Field, i, rep as u64);
                let draw = modes.sample(&set, model, &mut rf);
                vals.push(x_exponent(eps, &path, &spin, &draw, model)?.total().re.exp());
            }
            let r = replicates as f64;
            let mean = vals.iter().sum::<f64>() / r;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let low = (mean - 4.0 * (var / r).sqrt()).max(0.0);
            Ok((mean * mean / bound, low * low / bound, n))
        })
        .collect();
    let mut violations = 0;
    let mut raw_exceedances = 0;
    let mut max_ratio = 0.0_f64;
    let mut max_jumps = 0;
    for r in rows {
        let (ratio, low, n) = r?;
        if !(ratio <= 1.0) {
            raw_exceedances += 1;
        }
        if !(low <= 1.0) {
            violations += 1;
        }
        max_ratio = max_ratio.max(ratio);
        max_jumps = max_jumps.max(n);
    }
    Ok(BoundReport { paths: n_paths, replicates, violations, raw_exceedances, max_ratio, c1, max_jumps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::JumpRecord;

    fn model(e: f64) -> FieldModel {
        FieldModel::single_mode([0.6, 0.0, 0.8], 0.05, 1.0, e, 0.0).unwrap()
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let (x, w) = crate::field::gauss_hermite(30).unwrap();
        // standard normal nodes; rescale to variance 1/2
        for n in 0..6 {
            for m in 0..6 {
                let s: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| {
                        let y = C64::new(xi * FRAC_1_SQRT_2, 0.0);
                        wi * (hermite_h(n, y) * hermite_h(m, y)).re
                    })
                    .sum();
                let expect = if n == m { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-12, "{n} {m} {s}");
            }
        }
    }

    #[test]
    fn zero_coupling_exponent() {
        let g = TimeGrid::new(0.5, 20).unwrap();
        let m = model(0.0);
        let (path, spin, draw) = sample_tuple(&m, g, 1, 3, 0, 0).unwrap();
        let x = x_exponent(0.2, &path, &spin, &draw, &m).unwrap();
        assert_eq!(x.y1, ZERO);
        assert_eq!(x.y2, 0.0);
        let n = spin.jumps.total() as f64;
        let expect = n * C64::new(-0.2, 0.0).ln();
        assert!((x.y3 - expect).norm() < 1e-12);
    }

    #[test]
    fn constant_path_without_jumps() {
        let g = TimeGrid::new(0.5, 10).unwrap();
        let path = ParticlePath::from_increments(&[0.0; 3], g, vec![0.0; 30]).unwrap();
        let spin = SpinPath::new(-1, JumpRecord::new(1.0, 0.5, vec![]).unwrap()).unwrap();
        let m = model(0.3);
        let (set, _) = path_observables(&path, &spin, &m, false);
        let draw = ModeSampler::new(&m).sample(&set, &m, &mut rng::from_seed(1));
        let x = x_exponent(0.2, &path, &spin, &draw, &m).unwrap();
        let b3: f64 = (0..10).map(|i| draw[30 + i]).sum::<f64>() * 0.05;
        assert!((x.y2 - 0.5 * 0.3 * -1.0 * b3).abs() < 1e-14);
        assert_eq!(x.y1, ZERO);
    }

    #[test]
    fn photon_state_is_normalized() {
        let s = FieldState::photon(0, 1, true);
        let (x, w) = crate::field::gauss_hermite(20).unwrap();
        let mut norm = 0.0;
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                let vals = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(a * FRAC_1_SQRT_2, 0.0), C64::new(b * FRAC_1_SQRT_2, 0.0)];
                norm += wa * wb * s.eval(&|o| vals[o]).norm_sqr();
            }
        }
        assert!((norm - 1.0).abs() < 1e-12);
    }
}
