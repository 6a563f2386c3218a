//! Pathwise stochastic integrals and the Itô-formula harness.
//!
//! Itô and Lebesgue terms use left endpoints, Stratonovich terms the
//! midpoint, and jump integrals are exact sums over the sampled jump times
//! with the Brownian position interpolated linearly.

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::process::{ParticlePath, Spin, SpinPath};
use crate::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Right-continuous spin at each grid node t_0..t_{n-1}.
pub fn node_spins(path: &ParticlePath, spin: &SpinPath) -> Vec<Spin> {
    let n = path.grid.n_steps();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let times = &spin.jumps.jump_times;
    let mut s = spin.sigma0;
    for i in 0..n {
        let t = path.grid.node(i);
        while j < times.len() && times[j] <= t {
            s = -s;
            j += 1;
        }
        out.push(s);
    }
    out
}

/// Σ f(t_i, B_{t_i}) · ΔB_i.
pub fn ito_integral<F>(mut f: F, path: &ParticlePath) -> C64
where
    F: FnMut(f64, &[f64], &mut [C64]),
{
    let d = path.dim;
    let mut buf = vec![ZERO; d];
    let mut acc = ZERO;
    for i in 0..path.grid.n_steps() {
        f(path.grid.node(i), path.position(i), &mut buf);
        for (v, db) in buf.iter().zip(path.increment(i)) {
            acc += v * db;
        }
    }
    acc
}

/// Σ a((B_{t_i} + B_{t_{i+1}})/2) · ΔB_i.
pub fn stratonovich_integral<F>(mut a: F, path: &ParticlePath) -> C64
where
    F: FnMut(&[f64], &mut [C64]),
{
    let d = path.dim;
    let mut buf = vec![ZERO; d];
    let mut mid = vec![0.0; d];
    let mut acc = ZERO;
    for i in 0..path.grid.n_steps() {
        let (x, y) = (path.position(i), path.position(i + 1));
        for mu in 0..d {
            mid[mu] = 0.5 * (x[mu] + y[mu]);
        }
        a(&mid, &mut buf);
        for (v, db) in buf.iter().zip(path.increment(i)) {
            acc += v * db;
        }
    }
    acc
}

/// Σ f(t_i, B_{t_i}, σ_{t_i}) Δt with σ right-continuous.
pub fn path_lebesgue<F>(f: F, path: &ParticlePath, spin: &SpinPath) -> C64
where
    F: Fn(f64, &[f64], Spin) -> C64,
{
    let dt = path.grid.dt();
    let spins = node_spins(path, spin);
    let mut acc = ZERO;
    for (i, &s) in spins.iter().enumerate() {
        acc += f(path.grid.node(i), path.position(i), s);
    }
    acc * dt
}

/// Σ_j W(s_j, B_{s_j}, -σ_{s_j-}). The integrand receives the post-jump
/// spin, so a weight written as W(x, -σ) reads its argument directly.
pub fn jump_integral<F>(w: F, path: &ParticlePath, spin: &SpinPath) -> Result<C64>
where
    F: Fn(f64, &[f64], Spin) -> C64,
{
    let mut acc = ZERO;
    for (j, &s) in spin.jumps.jump_times.iter().enumerate() {
        let x = path.position_at(s);
        let v = w(s, &x, -spin.before_jump(j));
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::PathFailure { time: s, reason: format!("non-finite jump integrand {v}") });
        }
        acc += v;
    }
    Ok(acc)
}

/// ∫ h dÑ = ∫ h dN - rate ∫ h ds.
pub fn compensated_jump_integral<F>(h: F, path: &ParticlePath, spin: &SpinPath, rate: f64) -> Result<C64>
where
    F: Fn(f64, &[f64], Spin) -> C64,
{
    let jumps = jump_integral(&h, path, spin)?;
    Ok(jumps - rate * path_lebesgue(&h, path, spin))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriverKind {
    Ito,
    Stratonovich,
    Lebesgue,
    JumpCount,
    JumpCompensated,
}

pub type VectorFn = Arc<dyn Fn(f64, &[f64], Spin) -> Vec<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, &[f64], Spin) -> f64 + Send + Sync>;

/// Integrand of (s, B_s, σ_s). Brownian integrals need a vector.
#[derive(Clone)]
pub enum Integrand {
    Vector(VectorFn),
    Scalar(ScalarFn),
}

#[derive(Clone)]
pub struct PathFunctional {
    pub kind: DriverKind,
    pub integrand: Integrand,
}

impl PathFunctional {
    pub fn ito(f: impl Fn(f64, &[f64], Spin) -> Vec<f64> + Send + Sync + 'static) -> Self {
        PathFunctional { kind: DriverKind::Ito, integrand: Integrand::Vector(Arc::new(f)) }
    }

    pub fn lebesgue(g: impl Fn(f64, &[f64], Spin) -> f64 + Send + Sync + 'static) -> Self {
        PathFunctional { kind: DriverKind::Lebesgue, integrand: Integrand::Scalar(Arc::new(g)) }
    }

    pub fn jump(h: impl Fn(f64, &[f64], Spin) -> f64 + Send + Sync + 'static) -> Self {
        PathFunctional { kind: DriverKind::JumpCount, integrand: Integrand::Scalar(Arc::new(h)) }
    }

    pub fn compensated(h: impl Fn(f64, &[f64], Spin) -> f64 + Send + Sync + 'static) -> Self {
        PathFunctional { kind: DriverKind::JumpCompensated, integrand: Integrand::Scalar(Arc::new(h)) }
    }

    fn scalar(&self) -> Result<&ScalarFn> {
        match &self.integrand {
            Integrand::Scalar(f) => Ok(f),
            Integrand::Vector(_) => Err(Error::InvalidParameter(format!("{:?} needs a scalar integrand", self.kind))),
        }
    }

    fn vector(&self) -> Result<&VectorFn> {
        match &self.integrand {
            Integrand::Vector(f) => Ok(f),
            Integrand::Scalar(_) => Err(Error::InvalidParameter(format!("{:?} needs a vector integrand", self.kind))),
        }
    }

    /// Evaluate on one path with the module's discretizations.
    pub fn evaluate(&self, path: &ParticlePath, spin: &SpinPath) -> Result<C64> {
        match self.kind {
            DriverKind::Ito => {
                let f = self.vector()?;
                let spins = node_spins(path, spin);
                let mut acc = 0.0;
                for i in 0..path.grid.n_steps() {
                    let v = f(path.grid.node(i), path.position(i), spins[i]);
                    acc += v.iter().zip(path.increment(i)).map(|(a, b)| a * b).sum::<f64>();
                }
                Ok(C64::new(acc, 0.0))
            }
            DriverKind::Stratonovich => {
                let f = self.vector()?;
                let spins = node_spins(path, spin);
                let mut acc = 0.0;
                for i in 0..path.grid.n_steps() {
                    let s = 0.5 * (path.grid.node(i) + path.grid.node(i + 1));
                    let v = f(s, &path.midpoint(i), spins[i]);
                    acc += v.iter().zip(path.increment(i)).map(|(a, b)| a * b).sum::<f64>();
                }
                Ok(C64::new(acc, 0.0))
            }
            DriverKind::Lebesgue => {
                let g = self.scalar()?;
                Ok(path_lebesgue(|s, x, sg| C64::new(g(s, x, sg), 0.0), path, spin))
            }
            DriverKind::JumpCount => {
                let h = self.scalar()?;
                jump_integral(|s, x, sg| C64::new(h(s, x, sg), 0.0), path, spin)
            }
            DriverKind::JumpCompensated => {
                let h = self.scalar()?;
                compensated_jump_integral(|s, x, sg| C64::new(h(s, x, sg), 0.0), path, spin, spin.jumps.rate)
            }
        }
    }
}

/// X_t = x0 + sum of driver terms. The jump parts must satisfy h1·h2 = 0.
#[derive(Clone)]
pub struct Semimartingale {
    pub x0: f64,
    pub terms: Vec<PathFunctional>,
}

/// Per-step data for one component: continuous coefficient pieces and the
/// jump sizes inside (t_i, t_{i+1}].
struct Discretized {
    /// Itô coefficient f(t_i) per step (d entries each).
    f: Vec<Vec<f64>>,
    /// Drift per step, including -rate·h2 from compensated drivers.
    g: Vec<f64>,
    /// For each jump: (h1, h2).
    jumps: Vec<(f64, f64)>,
}

fn discretize(x: &Semimartingale, path: &ParticlePath, spin: &SpinPath) -> Result<Discretized> {
    let n = path.grid.n_steps();
    let d = path.dim;
    let spins = node_spins(path, spin);
    let rate = spin.jumps.rate;
    let mut out = Discretized {
        f: vec![vec![0.0; d]; n],
        g: vec![0.0; n],
        jumps: vec![(0.0, 0.0); spin.jumps.total()],
    };
    let jump_points: Vec<(f64, Vec<f64>, Spin)> = spin
        .jumps
        .jump_times
        .iter()
        .enumerate()
        .map(|(j, &s)| (s, path.position_at(s), -spin.before_jump(j)))
        .collect();
    for term in &x.terms {
        match term.kind {
            DriverKind::Ito => {
                let f = term.vector()?;
                for i in 0..n {
                    let v = f(path.grid.node(i), path.position(i), spins[i]);
                    for mu in 0..d {
                        out.f[i][mu] += v[mu];
                    }
                }
            }
            DriverKind::Stratonovich => {
                return Err(Error::Unsupported("Stratonovich drivers in the Itô formula".into()));
            }
            DriverKind::Lebesgue => {
                let g = term.scalar()?;
                for i in 0..n {
                    out.g[i] += g(path.grid.node(i), path.position(i), spins[i]);
                }
            }
            DriverKind::JumpCount => {
                let h = term.scalar()?;
                for (j, (s, xs, sg)) in jump_points.iter().enumerate() {
                    out.jumps[j].0 += h(*s, xs, *sg);
                }
            }
            DriverKind::JumpCompensated => {
                let h = term.scalar()?;
                for (j, (s, xs, sg)) in jump_points.iter().enumerate() {
                    out.jumps[j].1 += h(*s, xs, *sg);
                }
                for i in 0..n {
                    out.g[i] -= rate * h(path.grid.node(i), path.position(i), spins[i]);
                }
            }
        }
    }
    Ok(out)
}

/// A smooth F with its gradient and Hessian.
pub struct SmoothFn<'a> {
    pub value: &'a dyn Fn(&[f64]) -> f64,
    pub gradient: &'a dyn Fn(&[f64]) -> Vec<f64>,
    pub hessian: &'a dyn Fn(&[f64]) -> Vec<Vec<f64>>,
}

/// |F(X_t) - F(X_0) - (Itô formula right-hand side)|.
///
/// X is advanced step by step: the continuous increment over
/// [t_i, t_{i+1}] first, then the jumps in (t_i, t_{i+1}] in order. The
/// jump terms are therefore exact telescoping sums, and with only dN
/// drivers the residual is zero up to rounding.
pub fn ito_formula_residual(
    f: &SmoothFn,
    drivers: &[Semimartingale],
    path: &ParticlePath,
    spin: &SpinPath,
) -> Result<f64> {
    let k = drivers.len();
    let n = path.grid.n_steps();
    let d = path.dim;
    let dt = path.grid.dt();
    let disc: Vec<Discretized> = drivers.iter().map(|x| discretize(x, path, spin)).collect::<Result<_>>()?;
    let times = &spin.jumps.jump_times;
    let mut x: Vec<f64> = drivers.iter().map(|m| m.x0).collect();
    let f0 = (f.value)(&x);
    let mut rhs = 0.0;
    let mut j = 0;
    for i in 0..n {
        let grad = (f.gradient)(&x);
        let hess = (f.hessian)(&x);
        let db = path.increment(i);
        let mut dx = vec![0.0; k];
        for c in 0..k {
            let fdb: f64 = disc[c].f[i].iter().zip(db).map(|(a, b)| a * b).sum();
            dx[c] = fdb + disc[c].g[i] * dt;
            // The two compensator integrals of the general formula combine
            // to -rate·h2·∇F ds, which is already folded into g.
            rhs += grad[c] * dx[c];
        }
        for a in 0..k {
            for b in 0..k {
                let ff: f64 = (0..d).map(|mu| disc[a].f[i][mu] * disc[b].f[i][mu]).sum();
                rhs += 0.5 * hess[a][b] * ff * dt;
            }
        }
        for c in 0..k {
            x[c] += dx[c];
        }
        let t_next = path.grid.node(i + 1);
        while j < times.len() && times[j] <= t_next {
            let before = (f.value)(&x);
            for c in 0..k {
                let (h1, h2) = disc[c].jumps[j];
                x[c] += h1 + h2;
            }
            rhs += (f.value)(&x) - before;
            j += 1;
        }
    }
    Ok(((f.value)(&x) - f0 - rhs).abs())
}

/// Residual of the product rule d(ZY) = dZ·Y + Z·dY + dZ·dY for scalar
/// semimartingales in d = 1, using the same stepping as the Itô harness.
pub fn product_rule_residual(z: &Semimartingale, y: &Semimartingale, path: &ParticlePath, spin: &SpinPath) -> Result<f64> {
    let n = path.grid.n_steps();
    let dt = path.grid.dt();
    let dz = discretize(z, path, spin)?;
    let dy = discretize(y, path, spin)?;
    let times = &spin.jumps.jump_times;
    let (mut zv, mut yv) = (z.x0, y.x0);
    let p0 = zv * yv;
    let mut rhs = 0.0;
    let mut j = 0;
    for i in 0..n {
        let db = path.increment(i);
        let vz: f64 = dz.f[i].iter().zip(db).map(|(a, b)| a * b).sum();
        let vy: f64 = dy.f[i].iter().zip(db).map(|(a, b)| a * b).sum();
        let cross: f64 = dz.f[i].iter().zip(&dy.f[i]).map(|(a, b)| a * b).sum();
        rhs += zv * (dy.g[i] * dt + vy) + yv * (dz.g[i] * dt + vz) + cross * dt;
        zv += vz + dz.g[i] * dt;
        yv += vy + dy.g[i] * dt;
        let t_next = path.grid.node(i + 1);
        while j < times.len() && times[j] <= t_next {
            let (fz, gz) = dz.jumps[j];
            let (fy, gy) = dy.jumps[j];
            let (jz, jy) = (fz + gz, fy + gy);
            rhs += zv * jy + yv * jz + jz * jy;
            zv += fz + gz;
            yv += fy + gy;
            j += 1;
        }
    }
    Ok((zv * yv - p0 - rhs).abs())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ItoSuiteReport {
    pub paths: usize,
    pub n_steps: usize,
    /// Largest residual of the pure-jump Itô formula.
    pub pure_jump_max: f64,
    /// Largest residual of the pure-jump product rule.
    pub product_max: f64,
    /// Mean-square residual of the mixed case at n_steps and 2·n_steps.
    pub mixed_ms_coarse: f64,
    pub mixed_ms_fine: f64,
    pub ms_ratio: f64,
    /// Same for the mean absolute residual (ratio ≈ √2).
    pub mixed_abs_coarse: f64,
    pub mixed_abs_fine: f64,
    pub abs_ratio: f64,
}

fn coarsen(path: &ParticlePath) -> Result<ParticlePath> {
    let n = path.grid.n_steps();
    if n % 2 != 0 {
        return Err(Error::InvalidGrid("fine grid must have an even step count".into()));
    }
    let d = path.dim;
    let grid = crate::process::TimeGrid::new(path.grid.t_max(), n / 2)?;
    let mut inc = Vec::with_capacity(d * n / 2);
    for i in 0..n / 2 {
        let (a, b) = (path.increment(2 * i), path.increment(2 * i + 1));
        inc.extend(a.iter().zip(b).map(|(x, y)| x + y));
    }
    ParticlePath::from_increments(&path.start, grid, inc)
}

/// Runs the Itô-formula harness on `paths` sampled (path, spin) pairs:
/// F = e^x for X = ∫h dN, the pure-jump product rule, and the mixed case
/// F = x² for X = ∫(1 + 0.3 sin X) dB + ∫0.2 ds + ∫0.5 dN on nested grids
/// with n_steps and 2·n_steps.
pub fn ito_suite(paths: usize, n_steps: usize, t: f64, seed: u64) -> Result<ItoSuiteReport> {
    use rayon::prelude::*;
    let fine = crate::process::TimeGrid::new(t, 2 * n_steps)?;
    let rows: Vec<Result<[f64; 4]>> = (0..paths as u64)
        .into_par_iter()
        .map(|i| {
            let (path, spin) = crate::process::sample_path_pair(seed, i, &[0.0], fine, 1, 1.0)?;
            let coarse = coarsen(&path)?;

            let xj = Semimartingale { x0: 0.1, terms: vec![PathFunctional::jump(|s, x, sg| 0.3 * sg as f64 + 0.1 * s + 0.05 * x[0])] };
            let value = |x: &[f64]| x[0].exp();
            let gradient = |x: &[f64]| vec![x[0].exp()];
            let hessian = |x: &[f64]| vec![vec![x[0].exp()]];
            let exp = SmoothFn { value: &value, gradient: &gradient, hessian: &hessian };
            let pure = ito_formula_residual(&exp, &[xj], &coarse, &spin)?;

            let z = Semimartingale { x0: 0.5, terms: vec![PathFunctional::jump(|s, x, _| s + x[0])] };
            let y = Semimartingale { x0: -1.0, terms: vec![PathFunctional::jump(|_, _, sg| 0.3 * sg as f64)] };
            let prod = product_rule_residual(&z, &y, &coarse, &spin)?;

            let mixed = Semimartingale {
                x0: 0.0,
                terms: vec![
                    PathFunctional::ito(|_, x, _| vec![1.0 + 0.3 * x[0].sin()]),
                    PathFunctional::lebesgue(|_, _, _| 0.2),
                    PathFunctional::jump(|_, _, _| 0.5),
                ],
            };
            let value = |x: &[f64]| x[0] * x[0];
            let gradient = |x: &[f64]| vec![2.0 * x[0]];
            let hessian = |_: &[f64]| vec![vec![2.0]];
            let sq = SmoothFn { value: &value, gradient: &gradient, hessian: &hessian };
            let rc = ito_formula_residual(&sq, std::slice::from_ref(&mixed), &coarse, &spin)?;
            let rf = ito_formula_residual(&sq, &[mixed], &path, &spin)?;
            Ok([pure, prod, rc, rf])
        })
        .collect();
    let mut pure_jump_max = 0.0_f64;
    let mut product_max = 0.0_f64;
    let (mut msc, mut msf, mut abc, mut abf) = (0.0, 0.0, 0.0, 0.0);
    for r in rows {
        let [p, q, c, f] = r?;
        pure_jump_max = pure_jump_max.max(p);
        product_max = product_max.max(q);
        msc += c * c;
        msf += f * f;
        abc += c;
        abf += f;
    }
    let n = paths as f64;
    let (msc, msf, abc, abf) = (msc / n, msf / n, abc / n, abf / n);
    Ok(ItoSuiteReport {
        paths,
        n_steps,
        pure_jump_max,
        product_max,
        mixed_ms_coarse: msc,
        mixed_ms_fine: msf,
        ms_ratio: msc / msf,
        mixed_abs_coarse: abc,
        mixed_abs_fine: abf,
        abs_ratio: abc / abf,
    })
}
