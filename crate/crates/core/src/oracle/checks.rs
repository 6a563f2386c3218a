use ndarray::{s, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fock::{build_truncated_pf, FockSpec, Geometry, OracleVariant};
use super::{build_pauli_lattice, ground_energy, lattice_vector, HermitianOperator, LatticeSpec, Spectral};
use crate::estimate::McEstimate;
use crate::pauli_fk::{pauli_pairing, GaussianProposal, PauliCoefficients, PeriodicField};
use crate::process::{Spin, TimeGrid};
use std::sync::Arc;
use crate::field::{gauss_hermite, FieldKind, FieldModel, PolarizationDyad};
use crate::linalg::{self, CMatrix};
use crate::pf_mc::hermite_h;
use crate::{Error, Result};

const VIOLATION_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityConfig {
    pub model: FieldModel,
    pub couplings: Vec<f64>,
    pub fiber_cutoff: usize,
    pub lattice_cutoff: usize,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub potential: Vec<f64>,
    pub p: [f64; 3],
}

impl InequalityConfig {
    /// Single mode k = (1,0,1) on a 6-site ring of length 2π with
    /// V = cos x / 2, fiber momentum (0.3,0,0), e ∈ {0.25, 0.5, 1}.
    pub fn standard() -> Result<Self> {
        let model = FieldModel::single_mode([1.0, 0.0, 1.0], 0.1, 1.0, 0.0, 0.0)?;
        let lattice = LatticeSpec::new(1, 2.0 * std::f64::consts::PI, 6)?;
        let potential = (0..6).map(|i| 0.5 * (i as f64 * lattice.spacing()).cos()).collect();
        Ok(InequalityConfig { model, couplings: vec![0.25, 0.5, 1.0], fiber_cutoff: 6, lattice_cutoff: 3, lattice, potential, p: [0.3, 0.0, 0.0] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityRow {
    pub name: String,
    pub coupling: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs.
    pub margin: f64,
    /// False for orderings that are only reported.
    pub asserted: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub rows: Vec<InequalityRow>,
    pub violations: usize,
    pub min_margin: f64,
}

fn energy(spec: &FockSpec, g: &Geometry, v: OracleVariant) -> Result<f64> {
    ground_energy(&build_truncated_pf(spec, g, v)?)
}

fn row(name: &str, e: f64, lhs: f64, rhs: f64, asserted: bool) -> InequalityRow {
    let margin = rhs - lhs;
    InequalityRow { name: name.into(), coupling: e, lhs, rhs, margin, asserted, ok: !asserted || margin >= -VIOLATION_TOL }
}

fn rows_for(cfg: &InequalityConfig, e: f64) -> Result<Vec<InequalityRow>> {
    let model = cfg.model.with_coupling(e);
    let fs = FockSpec { model: model.clone(), cutoff: cfg.fiber_cutoff };
    let ls = FockSpec { model, cutoff: cfg.lattice_cutoff };
    let lat = Geometry::Lattice { lattice: cfg.lattice, potential: cfg.potential.clone() };
    let f0 = Geometry::Fiber { p: [0.0; 3] };
    let fp = Geometry::Fiber { p: cfg.p };
    let mut out = Vec::new();

    let free = energy(&ls, &lat, OracleVariant::Decoupled)?;
    let spinless = energy(&ls, &lat, OracleVariant::Spinless)?;
    out.push(row("diamagnetic: free <= spinless", e, free, spinless, true));

    let full = energy(&ls, &lat, OracleVariant::Full { eps: 0.0 })?;
    for axis in [2, 1, 0] {
        let perp = energy(&ls, &lat, OracleVariant::Perp { eps: 0.0, axis })?;
        out.push(row(&format!("lattice: perp(B{}) <= full", axis + 1), e, perp, full, true));
    }

    let full_p = energy(&fs, &fp, OracleVariant::Full { eps: 0.0 })?;
    for axis in [2, 1, 0] {
        let perp0 = energy(&fs, &f0, OracleVariant::Perp { eps: 0.0, axis })?;
        out.push(row(&format!("fiber: perp(0; B{}) <= full(P)", axis + 1), e, perp0, full_p, true));
    }

    let s0 = energy(&fs, &f0, OracleVariant::Spinless)?;
    let sp = energy(&fs, &fp, OracleVariant::Spinless)?;
    out.push(row("fiber spinless: E(0) <= E(P)", e, s0, sp, true));

    let full_0 = energy(&fs, &f0, OracleVariant::Full { eps: 0.0 })?;
    out.push(row("fiber spin: E(0) <= E(P)", e, full_0, full_p, false));
    Ok(out)
}

/// Dense ground energies for the diamagnetic, spin-perpendicular and fiber
/// orderings at each coupling.
pub fn energy_inequality_report(cfg: &InequalityConfig) -> Result<InequalityReport> {
    let per: Vec<Result<Vec<InequalityRow>>> = cfg.couplings.par_iter().map(|&e| rows_for(cfg, e)).collect();
    let mut rows = Vec::new();
    for r in per {
        rows.extend(r?);
    }
    let violations = rows.iter().filter(|r| !r.ok).count();
    let min_margin = rows.iter().filter(|r| r.asserted).map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(InequalityReport { rows, violations, min_margin })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityConfig {
    /// Single mode with k orthogonal to the lattice axis.
    pub model: FieldModel,
    pub sites: usize,
    pub length: f64,
    pub n_quad: usize,
    pub eps_sf: f64,
    pub t: f64,
    #[serde(default)]
    pub potential: Vec<f64>,
}

impl PositivityConfig {
    pub fn standard(eps_sf: f64, coupling: f64) -> Result<Self> {
        Ok(PositivityConfig {
            model: FieldModel::single_mode([0.0, 0.0, 1.0], 0.5, 1.0, coupling, 0.0)?,
            sites: 16,
            length: 8.0,
            n_quad: 8,
            eps_sf,
            t: 2.0,
            potential: vec![],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositivityReport {
    pub dim: usize,
    pub min_entry: f64,
    pub max_entry: f64,
    /// min / max.
    pub min_ratio: f64,
    /// Largest imaginary part left after the θ conjugation.
    pub max_imag: f64,
    pub positive: bool,
    /// Largest modulus in the spin-flip blocks.
    pub max_spin_offdiag: f64,
    pub zero_spin_blocks: bool,
}

/// Toy model semigroup θ⁻¹e^{-tH(ε)}θ on (quadrature point × spin × site),
/// θ = e^{-i(π/2)N}. With k ⟂ x̂ only one real oscillator couples to A_x;
/// the others contribute free Mehler factors and are left out.
pub fn positivity_check(cfg: &PositivityConfig) -> Result<PositivityReport> {
    let model = &cfg.model;
    model.validate()?;
    if model.modes.len() != 1 {
        return Err(Error::Unsupported("positivity check takes a single mode".into()));
    }
    let mode = &model.modes[0];
    if mode.k[0] != 0.0 {
        return Err(Error::Unsupported("mode must be orthogonal to the lattice axis".into()));
    }
    let lattice = LatticeSpec::new(1, cfg.length, cfg.sites)?;
    if !cfg.potential.is_empty() && cfg.potential.len() != cfg.sites {
        return Err(Error::InvalidParameter("potential length".into()));
    }
    let nq = cfg.n_quad;
    if nq < 2 {
        return Err(Error::InvalidParameter("n_quad >= 2".into()));
    }
    let pol = PolarizationDyad::new(&mode.k);
    let coef = crate::field::observable_coefficients(FieldKind::A, 0, &[0.0; 3], model, std::slice::from_ref(&pol));
    let c_eff = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
    let e = model.coupling;
    let n = cfg.sites;
    let h = lattice.spacing();
    let hop = 0.5 / (h * h);

    // single oscillator, occupations 0..nq-1
    let mut x = CMatrix::zeros((nq, nq));
    for k in 1..nq {
        let v = C64::new((k as f64 / 2.0).sqrt(), 0.0);
        x[[k - 1, k]] = v;
        x[[k, k - 1]] = v;
    }
    let u = linalg::hermitian_function(&x, |l| C64::from_polar(1.0, -e * h * c_eff * l))?;
    let ud = linalg::adjoint(&u);
    let block = n * nq;
    let dim = 2 * block;
    let mut hm = CMatrix::zeros((dim, dim));
    for r in 0..2 {
        for site in 0..n {
            let v = cfg.potential.get(site).copied().unwrap_or(0.0);
            let a0 = r * block + site * nq;
            for k in 0..nq {
                hm[[a0 + k, a0 + k]] += C64::new(2.0 * hop + v + mode.omega * k as f64, 0.0);
                hm[[a0 + k, (1 - r) * block + site * nq + k]] += C64::new(-cfg.eps_sf, 0.0);
            }
            let b0 = r * block + ((site + 1) % n) * nq;
            hm.slice_mut(s![a0..a0 + nq, b0..b0 + nq]).scaled_add(C64::new(-hop, 0.0), &u);
            hm.slice_mut(s![b0..b0 + nq, a0..a0 + nq]).scaled_add(C64::new(-hop, 0.0), &ud);
        }
    }
    let labels = (0..dim).map(|i| format!("s{}:x{}:n{}", i / block, (i % block) / nq, i % nq)).collect();
    let op = HermitianOperator::new(hm, labels)?;

    let sg = if cfg.eps_sf == 0.0 {
        // block diagonal in spin: exponentiate each block so the flip blocks stay exactly zero
        let mut out = CMatrix::zeros((dim, dim));
        for r in 0..2 {
            let sub = op.matrix.slice(s![r * block..(r + 1) * block, r * block..(r + 1) * block]).to_owned();
            let (vals, vecs) = linalg::eigh(&sub)?;
            let sgr = Spectral { vals, vecs }.semigroup(cfg.t);
            out.slice_mut(s![r * block..(r + 1) * block, r * block..(r + 1) * block]).assign(&sgr);
        }
        out
    } else {
        op.spectral()?.semigroup(cfg.t)
    };

    // θ⁻¹ S θ with θ = diag(e^{-iπn/2})
    let phase = |k: usize| C64::from_polar(1.0, 0.5 * std::f64::consts::PI * (k % 4) as f64);
    let mut st = sg;
    for i in 0..dim {
        for j in 0..dim {
            st[[i, j]] *= phase(i % nq) * phase(j % nq).conj();
        }
    }

    // Fock -> quadrature points: T_{in} = sqrt(w_i) h_n(x_i/√2)
    let (nodes, weights) = gauss_hermite(nq)?;
    let mut tm = Array2::<f64>::zeros((nq, nq));
    for i in 0..nq {
        for k in 0..nq {
            tm[[i, k]] = weights[i].sqrt() * hermite_h(k as u32, C64::new(nodes[i] * std::f64::consts::FRAC_1_SQRT_2, 0.0)).re;
        }
    }
    let mut q = CMatrix::zeros((dim, dim));
    for b in 0..2 * n {
        q.slice_mut(s![b * nq..(b + 1) * nq, b * nq..(b + 1) * nq]).assign(&tm.mapv(|v| C64::new(v, 0.0)));
    }
    let r = q.dot(&st).dot(&q.t());

    let max_imag = r.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
    let max_entry = r.iter().fold(f64::NEG_INFINITY, |a, z| a.max(z.re));
    let min_entry = r.iter().fold(f64::INFINITY, |a, z| a.min(z.re));
    let mut max_spin_offdiag = 0.0_f64;
    for i in 0..block {
        for j in 0..block {
            max_spin_offdiag = max_spin_offdiag.max(r[[i, block + j]].norm()).max(r[[block + i, j]].norm());
        }
    }
    Ok(PositivityReport {
        dim,
        min_entry,
        max_entry,
        min_ratio: min_entry / max_entry,
        max_imag,
        positive: min_entry > 1e-12 * max_entry,
        max_spin_offdiag,
        zero_spin_blocks: max_spin_offdiag == 0.0,
    })
}

/// MC pairing of a smoothed point mass with e^{-th̃}g against the lattice
/// operator, in d = 1 with a random periodic (a, b, V).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeComparisonConfig {
    pub length: f64,
    pub sites: usize,
    pub t: f64,
    pub eps: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub field_seed: u64,
    pub harmonics: usize,
    /// Amplitudes for the a, b and V rows.
    pub amps: [f64; 3],
    pub b1_offset: f64,
    pub v_offset: f64,
    /// f = N(x0, smoothing²) ⊗ e_σ0.
    pub x0: f64,
    pub sigma0: Spin,
    pub smoothing: f64,
    /// g = exp(-(x - c)²/2w²) (1, (1+i)/2).
    pub g_center: f64,
    pub g_width: f64,
}

impl LatticeComparisonConfig {
    pub fn standard() -> Self {
        LatticeComparisonConfig {
            length: 8.0,
            sites: 64,
            t: 0.5,
            eps: 0.2,
            n_paths: 200_000,
            n_steps: 200,
            seed: 1,
            field_seed: 7,
            harmonics: 2,
            amps: [0.5, 0.3, 0.5],
            b1_offset: 0.6,
            v_offset: 0.0,
            x0: 4.0,
            sigma0: 1,
            smoothing: 0.25,
            g_center: 4.3,
            g_width: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeComparison {
    pub mc: McEstimate,
    pub oracle: C64,
    /// |mc - oracle| / stderr.
    pub z: f64,
    pub rel_stderr: f64,
    pub pass: bool,
}

pub fn lattice_comparison(cfg: &LatticeComparisonConfig) -> Result<LatticeComparison> {
    if !(cfg.smoothing > 0.0 && cfg.g_width > 0.0) || cfg.sigma0.abs() != 1 {
        return Err(Error::InvalidParameter("smoothing, g_width > 0 and sigma0 = ±1 required".into()));
    }
    let field = PeriodicField::random(1, cfg.length, cfg.harmonics, cfg.amps, cfg.b1_offset, cfg.v_offset, cfg.field_seed);
    let coeffs = PauliCoefficients::new(Arc::new(field), cfg.eps)?;
    let (x0, s0, sm) = (cfg.x0, cfg.sigma0, cfg.smoothing);
    let (gc, gw) = (cfg.g_center, cfg.g_width);
    let f = move |x: &[f64], s: Spin| C64::new(if s == s0 { crate::field::normal_pdf(x[0] - x0, sm * sm) } else { 0.0 }, 0.0);
    let g = move |x: &[f64], s: Spin| {
        let r = (-(x[0] - gc).powi(2) / (2.0 * gw * gw)).exp();
        if s == 1 {
            C64::new(r, 0.0)
        } else {
            C64::new(0.5 * r, 0.5 * r)
        }
    };
    let grid = TimeGrid::new(cfg.t, cfg.n_steps)?;
    let proposal = GaussianProposal { center: vec![x0], sd: sm };
    let mc = pauli_pairing(&coeffs, &f, &g, cfg.t, &proposal, cfg.n_paths, grid, cfg.seed)?;

    let spec = LatticeSpec::new(1, cfg.length, cfg.sites)?;
    let h = build_pauli_lattice(&coeffs, &spec)?;
    let u = lattice_vector(&spec, &f);
    let v = lattice_vector(&spec, &g);
    let oracle = h.spectral()?.matrix_element(cfg.t, &u, &v) * spec.spacing();
    let z = (mc.mean - oracle).norm() / mc.stderr;
    let rel_stderr = mc.stderr / oracle.norm();
    Ok(LatticeComparison { mc, oracle, z, rel_stderr, pass: z <= 3.0 && rel_stderr <= 0.05 })
}
