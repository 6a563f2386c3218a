//! Feynman-Kac estimators for the spin-1/2 Pauli semigroup.
//!
//! The spin flips at the jumps of a Poisson process. At a jump from σ to
//! -σ the path picks up the factor (1/2)(b1 - iσb2) - εψ_ε, and the rate-1
//! normalization contributes the prefactor e^t.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::estimate::{run_paths, McEstimate};
use crate::integrators::{jump_integral, path_lebesgue, stratonovich_integral};
use crate::process::{sample_path_pair, ParticlePath, Spin, SpinPath, TimeGrid};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Spectral indicator of |z| < ε/2.
pub fn psi_eps(z: C64, eps: f64) -> f64 {
    if z.norm() < 0.5 * eps {
        1.0
    } else {
        0.0
    }
}

/// Vector potential a, spin field b and potential V as functions of x.
pub trait PauliField: Send + Sync {
    fn dim(&self) -> usize;
    fn a(&self, x: &[f64], out: &mut [f64]);
    fn b(&self, x: &[f64]) -> [f64; 3];
    fn v(&self, x: &[f64]) -> f64;
    /// b and V together; override when they share work.
    fn b_and_v(&self, x: &[f64]) -> ([f64; 3], f64) {
        (self.b(x), self.v(x))
    }
    /// True when b1 = b2 = 0 identically, so that ε = 0 reduces to the
    /// diagonal (no-jump) semigroup.
    fn offdiag_vanishes(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantField {
    pub a: Vec<f64>,
    pub b: [f64; 3],
    pub v: f64,
}

impl PauliField for ConstantField {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn a(&self, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }
    fn b(&self, _: &[f64]) -> [f64; 3] {
        self.b
    }
    fn v(&self, _: &[f64]) -> f64 {
        self.v
    }
    fn offdiag_vanishes(&self) -> bool {
        self.b[0] == 0.0 && self.b[1] == 0.0
    }
}

/// Trigonometric polynomials with period L in every axis. All components
/// share one list of integer wavevectors, so one evaluation computes each
/// sin/cos once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicField {
    pub period: f64,
    pub wavevectors: Vec<Vec<i32>>,
    /// Rows: a_1..a_d, b_1, b_2, b_3, V. Each row is
    /// [constant, cos_1, sin_1, cos_2, sin_2, ...].
    pub rows: Vec<Vec<f64>>,
}

impl PeriodicField {
    pub fn dim_of(&self) -> usize {
        self.rows.len() - 4
    }

    fn harmonics(&self, x: &[f64], out: &mut Vec<(f64, f64)>) {
        out.clear();
        let w = 2.0 * PI / self.period;
        for n in &self.wavevectors {
            let phase: f64 = n.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>() * w;
            out.push(phase.sin_cos());
        }
    }

    fn row(&self, r: usize, h: &[(f64, f64)]) -> f64 {
        let c = &self.rows[r];
        let mut acc = c[0];
        for (m, &(s, co)) in h.iter().enumerate() {
            acc += c[1 + 2 * m] * co + c[2 + 2 * m] * s;
        }
        acc
    }

    /// Random field with coefficients uniform in [-amp, amp] per row kind.
    /// b1 gets the constant offset `b1_offset` so the off-diagonal can be
    /// kept away from zero.
    pub fn random(dim: usize, period: f64, n_harmonics: usize, amps: [f64; 3], b1_offset: f64, v_offset: f64, seed: u64) -> Self {
        let mut rng = rng::substream(seed, Purpose::Aux, 0, 0);
        let mut wavevectors = Vec::new();
        for m in 1..=n_harmonics as i32 {
            for axis in 0..dim {
                let mut n = vec![0; dim];
                n[axis] = m;
                wavevectors.push(n);
            }
        }
        let width = 1 + 2 * wavevectors.len();
        let mut rows = Vec::new();
        for r in 0..dim + 4 {
            let amp = if r < dim {
                amps[0]
            } else if r < dim + 3 {
                amps[1]
            } else {
                amps[2]
            };
            let mut row: Vec<f64> = (0..width).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
            // Decay higher harmonics so the fields stay smooth.
            for (m, chunk) in row[1..].chunks_mut(2 * dim).enumerate() {
                for c in chunk {
                    *c /= (1 + m) as f64;
                }
            }
            if r == dim {
                row[0] = b1_offset;
            }
            if r == dim + 3 {
                row[0] = v_offset;
            }
            rows.push(row);
        }
        PeriodicField { period, wavevectors, rows }
    }

    /// Lower bound of |(1/2)(b1 - iσb2)| from the coefficient sizes.
    pub fn offdiag_lower_bound(&self) -> f64 {
        let d = self.dim_of();
        let osc = |r: usize| self.rows[r][1..].iter().map(|c| c.abs()).sum::<f64>();
        let b1 = self.rows[d][0].abs() - osc(d);
        let b2 = self.rows[d + 1][0].abs() + osc(d + 1);
        0.5 * (b1 - b2).max(0.0)
    }
}

impl PauliField for PeriodicField {
    fn dim(&self) -> usize {
        self.dim_of()
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        let mut h = Vec::with_capacity(self.wavevectors.len());
        self.harmonics(x, &mut h);
        for (mu, o) in out.iter_mut().enumerate() {
            *o = self.row(mu, &h);
        }
    }
    fn b(&self, x: &[f64]) -> [f64; 3] {
        self.b_and_v(x).0
    }
    fn v(&self, x: &[f64]) -> f64 {
        self.b_and_v(x).1
    }
    fn b_and_v(&self, x: &[f64]) -> ([f64; 3], f64) {
        let d = self.dim_of();
        let mut h = Vec::with_capacity(self.wavevectors.len());
        self.harmonics(x, &mut h);
        ([self.row(d, &h), self.row(d + 1, &h), self.row(d + 2, &h)], self.row(d + 3, &h))
    }
}

/// Adds ∇χ to the vector potential of another field.
pub struct GaugeShift {
    pub base: Arc<dyn PauliField>,
    pub grad_chi: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl PauliField for GaugeShift {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn a(&self, x: &[f64], out: &mut [f64]) {
        self.base.a(x, out);
        let mut g = vec![0.0; out.len()];
        (self.grad_chi)(x, &mut g);
        for (o, gi) in out.iter_mut().zip(g) {
            *o += gi;
        }
    }
    fn b(&self, x: &[f64]) -> [f64; 3] {
        self.base.b(x)
    }
    fn v(&self, x: &[f64]) -> f64 {
        self.base.v(x)
    }
    fn b_and_v(&self, x: &[f64]) -> ([f64; 3], f64) {
        self.base.b_and_v(x)
    }
    fn offdiag_vanishes(&self) -> bool {
        self.base.offdiag_vanishes()
    }
}

#[derive(Clone)]
pub struct PauliCoefficients {
    pub field: Arc<dyn PauliField>,
    /// Regularization ε >= 0.
    pub eps: f64,
    /// Jump rate r. The estimator uses e^{rt} and divides each jump factor by r.
    pub rate: f64,
}

impl PauliCoefficients {
    pub fn new(field: Arc<dyn PauliField>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps = {eps}")));
        }
        Ok(PauliCoefficients { field, eps, rate: 1.0 })
    }

    pub fn with_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::InvalidParameter(format!("rate = {rate}")));
        }
        self.rate = rate;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    fn diagonal_only(&self) -> bool {
        self.eps == 0.0 && self.field.offdiag_vanishes()
    }
}

/// U and W of the spin part: U(x,σ) = -(1/2)σ b3 and the jump factor
/// e^{W_ε(x,-σ)} for a flip away from σ.
pub struct SpinWeights;

impl SpinWeights {
    pub fn u(b: [f64; 3], sigma: Spin) -> f64 {
        -0.5 * sigma as f64 * b[2]
    }

    /// (1/2)(b1 - iσb2) - εψ_ε(-(1/2)(b1 - iσb2)) with σ the spin before the flip.
    pub fn jump_factor(b: [f64; 3], sigma_before: Spin, eps: f64) -> C64 {
        let z = 0.5 * C64::new(b[0], -(sigma_before as f64) * b[1]);
        if eps > 0.0 {
            z - eps * psi_eps(-z, eps)
        } else {
            z
        }
    }

    /// W_ε = log of the jump factor, principal branch.
    pub fn w(b: [f64; 3], sigma_before: Spin, eps: f64) -> C64 {
        Self::jump_factor(b, sigma_before, eps).ln()
    }
}

/// Z_t^ε = -i∫a∘dB - ∫V ds + (1/2)∫σ b3 ds + Σ W_ε.
pub fn z_exponent(coeffs: &PauliCoefficients, path: &ParticlePath, spin: &SpinPath) -> Result<C64> {
    let field = &coeffs.field;
    let d = path.dim;
    let mut abuf = vec![0.0; d];
    let sa = stratonovich_integral(
        |x, out| {
            field.a(x, &mut abuf);
            for (o, a) in out.iter_mut().zip(&abuf) {
                *o = C64::new(*a, 0.0);
            }
        },
        path,
    );
    let leb = path_lebesgue(
        |_, x, s| {
            let (b, v) = field.b_and_v(x);
            C64::new(-v - SpinWeights::u(b, s), 0.0)
        },
        path,
        spin,
    );
    let log_r = coeffs.rate.ln();
    let jumps = jump_integral(
        |_, x, post| {
            let w = SpinWeights::jump_factor(field.b(x), -post, coeffs.eps);
            w.ln() - log_r
        },
        path,
        spin,
    )?;
    Ok(C64::new(0.0, -1.0) * sa + leb + jumps)
}

/// Per-path weight e^{rt} e^{Z} with the ε = 0 diagonal rule applied.
fn path_weight(coeffs: &PauliCoefficients, t: f64, path: &ParticlePath, spin: &SpinPath) -> Result<C64> {
    if coeffs.diagonal_only() {
        if spin.jumps.total() > 0 {
            return Ok(C64::new(0.0, 0.0));
        }
    }
    let z = z_exponent(coeffs, path, spin)?;
    Ok((z + coeffs.rate * t).exp())
}

pub type SpinorFn = Arc<dyn Fn(&[f64], Spin) -> C64 + Send + Sync>;

#[allow(clippy::too_many_arguments)]
pub fn pauli_semigroup_apply(
    coeffs: &PauliCoefficients,
    g: &(dyn Fn(&[f64], Spin) -> C64 + Sync),
    t: f64,
    x0: &[f64],
    sigma0: Spin,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<McEstimate> {
    if !(t > 0.0) || (grid.t_max() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive and match the grid")));
    }
    if x0.len() != coeffs.dim() {
        return Err(Error::InvalidParameter("start point dimension".into()));
    }
    run_paths(n_paths, seed, |i| {
        let (path, spin) = sample_path_pair(seed, i, x0, grid, sigma0, coeffs.rate)?;
        let w = path_weight(coeffs, t, &path, &spin)?;
        if w == C64::new(0.0, 0.0) {
            return Ok(w);
        }
        Ok(w * g(path.end(), spin.at_end()))
    })
}

/// Isotropic Gaussian importance density for spatial pairings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianProposal {
    pub center: Vec<f64>,
    pub sd: f64,
}

impl GaussianProposal {
    pub fn sample(&self, rng: &mut rng::PathRng) -> Vec<f64> {
        self.center.iter().map(|c| c + self.sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.center.len() as f64;
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        (-0.5 * r2 / (self.sd * self.sd)).exp() / (2.0 * PI * self.sd * self.sd).powf(0.5 * d)
    }
}

/// Σ_σ ∫ conj f(x,σ) (e^{-t h̃} g)(x,σ) dx with x drawn from `proposal`
/// and σ summed exactly.
#[allow(clippy::too_many_arguments)]
pub fn pauli_pairing(
    coeffs: &PauliCoefficients,
    f: &(dyn Fn(&[f64], Spin) -> C64 + Sync),
    g: &(dyn Fn(&[f64], Spin) -> C64 + Sync),
    t: f64,
    proposal: &GaussianProposal,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<McEstimate> {
    if (grid.t_max() - t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidParameter("t must match the grid".into()));
    }
    run_paths(n_paths, seed, |i| {
        let mut rp = rng::substream(seed, Purpose::Proposal, i, 0);
        let x = proposal.sample(&mut rp);
        let q = proposal.density(&x);
        let mut acc = C64::new(0.0, 0.0);
        for (r, sigma0) in [1 as Spin, -1].into_iter().enumerate() {
            let fx = f(&x, sigma0).conj();
            let mut rb = rng::substream(seed, Purpose::Brownian, i, r as u64);
            let mut rj = rng::substream(seed, Purpose::Jumps, i, r as u64);
            let path = crate::process::sample_brownian_with(&x, grid, &mut rb);
            let spin = crate::process::sample_spin_path_with(sigma0, coeffs.rate, t, &mut rj)?;
            if fx == C64::new(0.0, 0.0) {
                continue;
            }
            let w = path_weight(coeffs, t, &path, &spin)?;
            if w != C64::new(0.0, 0.0) {
                acc += fx * w * g(path.end(), spin.at_end());
            }
        }
        Ok(acc / q)
    })
}

/// e^{-tK} g at a fixed point x, K from the spin jump generator:
/// (Kf)(σ) = U(σ) f(σ) - e^{W(-σ)} f(-σ). `w_log(σ')` is evaluated at the
/// post-flip spin σ'. The Lebesgue part is integrated exactly between
/// jump times, so no time grid is needed.
#[allow(clippy::too_many_arguments)]
pub fn k_semigroup_apply(
    u: &(dyn Fn(Spin) -> f64 + Sync),
    w_log: &(dyn Fn(Spin) -> C64 + Sync),
    g: &(dyn Fn(Spin) -> C64 + Sync),
    t: f64,
    sigma0: Spin,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if t == 0.0 {
        return Ok(McEstimate { mean: g(sigma0), stderr: 0.0, n: n_paths, seed });
    }
    run_paths(n_paths, seed, |i| {
        let mut rj = rng::substream(seed, Purpose::Jumps, i, 0);
        let spin = crate::process::sample_spin_path_with(sigma0, 1.0, t, &mut rj)?;
        let mut expo = C64::new(0.0, 0.0);
        let mut s = sigma0;
        let mut last = 0.0;
        for &tj in &spin.jumps.jump_times {
            expo -= u(s) * (tj - last);
            expo += w_log(-s);
            s = -s;
            last = tj;
        }
        expo -= u(s) * (t - last);
        Ok((expo + t).exp() * g(s))
    })
}

/// Spinor-valued function on the line used by the generator check.
pub type Spinor1d = Arc<dyn Fn(f64, Spin) -> C64 + Send + Sync>;

/// Quadrature settings for the Fourier side of the generator check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierBox {
    pub half_width: f64,
    pub n_points: usize,
}

impl Default for FourierBox {
    fn default() -> Self {
        FourierBox { half_width: 20.0, n_points: 4096 }
    }
}

/// e^{tΔ/2} applied to samples on a periodic grid via FFT.
fn heat_flow(values: &[C64], spacing: f64, t: f64) -> Vec<C64> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf = values.to_vec();
    fwd.process(&mut buf);
    let dk = 2.0 * PI / (n as f64 * spacing);
    for (j, z) in buf.iter_mut().enumerate() {
        let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let k = m * dk;
        *z *= (-0.5 * t * k * k).exp() / n as f64;
    }
    inv.process(&mut buf);
    buf
}

/// (f, e^{-t(-Δ/2 + εσ_F)} g) with σ_F = -σ1, by FFT quadrature in d = 1.
pub fn generator_lhs(eps: f64, f: &Spinor1d, g: &Spinor1d, t: f64, quad: FourierBox) -> C64 {
    let n = quad.n_points;
    let h = 2.0 * quad.half_width / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| -quad.half_width + i as f64 * h).collect();
    let flow = |s: Spin| heat_flow(&xs.iter().map(|&x| g(x, s)).collect::<Vec<_>>(), h, t);
    let gp = flow(1);
    let gm = flow(-1);
    let (c, sh) = ((eps * t).cosh(), (eps * t).sinh());
    let mut acc = C64::new(0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        acc += f(x, 1).conj() * (c * gp[i] + sh * gm[i]);
        acc += f(x, -1).conj() * (c * gm[i] + sh * gp[i]);
    }
    acc * h
}

/// Σ_σ ∫ conj f(x,σ) e^t E[g(x + B_t, σ_t) ε^{N_t}] dx by Monte Carlo.
pub fn generator_rhs(
    eps: f64,
    f: &Spinor1d,
    g: &Spinor1d,
    t: f64,
    proposal: &GaussianProposal,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<McEstimate> {
    run_paths(n_paths, seed, |i| {
        let mut rp = rng::substream(seed, Purpose::Proposal, i, 0);
        let x = proposal.sample(&mut rp);
        let q = proposal.density(&x);
        let mut acc = C64::new(0.0, 0.0);
        for (r, sigma0) in [1 as Spin, -1].into_iter().enumerate() {
            let mut rb = rng::substream(seed, Purpose::Brownian, i, r as u64);
            let mut rj = rng::substream(seed, Purpose::Jumps, i, r as u64);
            let path = crate::process::sample_brownian_with(&x, grid, &mut rb);
            let spin = crate::process::sample_spin_path_with(sigma0, 1.0, t, &mut rj)?;
            let weight = eps.powi(spin.jumps.total() as i32);
            acc += f(x[0], sigma0).conj() * g(path.end()[0], spin.at_end()) * weight;
        }
        Ok(acc * t.exp() / q)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorCheck {
    pub lhs: McEstimate,
    pub rhs: McEstimate,
}

/// Both sides of the σ_F generator identity. The quadrature side is
/// returned as an estimate with zero standard error.
#[allow(clippy::too_many_arguments)]
pub fn sigma_f_generator_check(
    eps_weight: f64,
    f: &Spinor1d,
    g: &Spinor1d,
    t: f64,
    proposal: &GaussianProposal,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<GeneratorCheck> {
    let lhs = generator_lhs(eps_weight, f, g, t, FourierBox::default());
    let rhs = generator_rhs(eps_weight, f, g, t, proposal, n_paths, grid, seed)?;
    Ok(GeneratorCheck { lhs: McEstimate { mean: lhs, stderr: 0.0, n: 0, seed }, rhs })
}
