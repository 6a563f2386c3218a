use std::collections::HashMap;

use ndarray::{s, Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::lattice::gauss_legendre;
use super::{check_dim, real_to_complex, HermitianOperator, LatticeSpec, DIMENSION_CAP};
use crate::field::{default_polarizations, observable_coefficients, FieldKind, FieldModel, PolarizationDyad};
use crate::linalg::{self, eigh_real, CMatrix};
use crate::pf_mc::{spin_slot, TestVector};
use crate::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Truncated Fock space over the real oscillators of a model: occupation
/// tuples with total occupation at most `cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FockSpec {
    pub model: FieldModel,
    pub cutoff: usize,
}

/// Occupation basis ordered by total occupation, so that every lower
/// cutoff is a prefix.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub n_osc: usize,
    pub cutoff: usize,
    pub states: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if parts == 1 {
        prefix.push(total as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first as u8);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

impl FockBasis {
    pub fn new(n_osc: usize, cutoff: usize) -> Result<Self> {
        if n_osc == 0 || cutoff > 60 {
            return Err(Error::InvalidParameter(format!("Fock basis with {n_osc} oscillators, cutoff {cutoff}")));
        }
        let mut states = Vec::new();
        for total in 0..=cutoff {
            compositions(total, n_osc, &mut Vec::new(), &mut states);
        }
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(FockBasis { n_osc, cutoff, states, index })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, occ: &[u8]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Number of states with total occupation at most m.
    pub fn dim_below(&self, m: usize) -> usize {
        self.states.iter().take_while(|s| s.iter().map(|&n| n as usize).sum::<usize>() <= m).count()
    }

    pub fn label(&self, i: usize) -> String {
        format!("{:?}", self.states[i])
    }
}

/// Field operators on a truncated Fock space. Products are formed on the
/// space with cutoff + 1 and then compressed, so quadratic expressions
/// are exact compressions of the untruncated operators.
pub struct FockOps {
    pub spec: FockSpec,
    pub outer: FockBasis,
    pub inner: usize,
    pols: Vec<PolarizationDyad>,
}

impl FockOps {
    pub fn new(spec: &FockSpec) -> Result<Self> {
        spec.model.validate()?;
        let outer = FockBasis::new(spec.model.n_oscillators(), spec.cutoff + 1)?;
        let inner = outer.dim_below(spec.cutoff);
        Ok(FockOps { pols: default_polarizations(&spec.model), spec: spec.clone(), outer, inner })
    }

    pub fn dim(&self) -> usize {
        self.inner
    }

    fn omega(&self, o: usize) -> f64 {
        self.spec.model.modes[o / 4].omega
    }

    /// Σ_o coef_o X_o on the outer space, X = (b + b†)/√2.
    pub fn linear_outer(&self, coef: &[f64]) -> Array2<f64> {
        let d = self.outer.dim();
        let mut m = Array2::<f64>::zeros((d, d));
        let mut t = vec![0u8; self.outer.n_osc];
        for (col, st) in self.outer.states.iter().enumerate() {
            let total: usize = st.iter().map(|&n| n as usize).sum();
            for (o, &c) in coef.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                t.copy_from_slice(st);
                if st[o] > 0 {
                    t[o] = st[o] - 1;
                    let row = self.outer.index_of(&t).expect("lowered state");
                    m[[row, col]] += c * (st[o] as f64 / 2.0).sqrt();
                }
                if total < self.outer.cutoff {
                    t[o] = st[o] + 1;
                    let row = self.outer.index_of(&t).expect("raised state");
                    m[[row, col]] += c * ((st[o] as f64 + 1.0) / 2.0).sqrt();
                }
            }
        }
        m
    }

    /// b†_p b_q on the outer space.
    fn hop_outer(&self, p: usize, q: usize) -> Array2<f64> {
        let d = self.outer.dim();
        let mut m = Array2::<f64>::zeros((d, d));
        for (col, st) in self.outer.states.iter().enumerate() {
            if st[q] == 0 {
                continue;
            }
            let mut t = st.clone();
            let mut v = (st[q] as f64).sqrt();
            t[q] -= 1;
            t[p] += 1;
            v *= (t[p] as f64).sqrt();
            let row = self.outer.index_of(&t).expect("number-conserving");
            m[[row, col]] += v;
        }
        m
    }

    pub fn field_coefficients(&self, kind: FieldKind, component: usize, pos: &[f64; 3]) -> Vec<f64> {
        observable_coefficients(kind, component, pos, &self.spec.model, &self.pols)
    }

    pub fn field_outer(&self, kind: FieldKind, component: usize, pos: &[f64; 3]) -> Array2<f64> {
        self.linear_outer(&self.field_coefficients(kind, component, pos))
    }

    pub fn restrict<T: Clone>(&self, m: &Array2<T>) -> Array2<T> {
        m.slice(s![..self.inner, ..self.inner]).to_owned()
    }

    pub fn field(&self, kind: FieldKind, component: usize, pos: &[f64; 3]) -> Array2<f64> {
        self.restrict(&self.field_outer(kind, component, pos))
    }

    pub fn h_rad(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.inner, self.inner));
        for i in 0..self.inner {
            m[[i, i]] = self.outer.states[i].iter().enumerate().map(|(o, &n)| self.omega(o) * n as f64).sum();
        }
        m
    }

    /// Field momentum component μ on the outer space:
    /// Σ k_μ Σ_pol i(b_s† b_c - b_c† b_s).
    pub fn p_f_outer(&self, mu: usize) -> CMatrix {
        let d = self.outer.dim();
        let mut m = CMatrix::zeros((d, d));
        for (mi, mode) in self.spec.model.modes.iter().enumerate() {
            if mode.k[mu] == 0.0 {
                continue;
            }
            for pol in 0..2 {
                let c = crate::field::oscillator_index(mi, pol, false);
                let sn = crate::field::oscillator_index(mi, pol, true);
                let gen = &self.hop_outer(sn, c) - &self.hop_outer(c, sn);
                m.zip_mut_with(&gen, |z, g| *z += I * mode.k[mu] * *g);
            }
        }
        m
    }

    /// (1/2)(P - P_f - eA(0))², compressed; without A when `with_a` is false.
    pub fn fiber_kinetic(&self, p: [f64; 3], with_a: bool) -> CMatrix {
        let e = self.spec.model.coupling;
        let d = self.outer.dim();
        let mut k = CMatrix::zeros((self.inner, self.inner));
        for (mu, &pm) in p.iter().enumerate() {
            let mut l = -self.p_f_outer(mu);
            for i in 0..d {
                l[[i, i]] += pm;
            }
            if with_a && e != 0.0 {
                let a = self.field_outer(FieldKind::A, mu, &[0.0; 3]);
                l.zip_mut_with(&a, |z, x| *z -= e * *x);
            }
            let sq = l.dot(&l);
            k += &self.restrict(&sq).mapv(|z| 0.5 * z);
        }
        k
    }

    /// Compressed B_a² + B_b² at x.
    pub fn b_perp_square(&self, a: usize, b: usize, pos: &[f64; 3]) -> Array2<f64> {
        let ba = self.field_outer(FieldKind::B, a, pos);
        let bb = self.field_outer(FieldKind::B, b, pos);
        self.restrict(&(ba.dot(&ba) + bb.dot(&bb)))
    }

    pub fn vacuum_vector(&self) -> Array1<C64> {
        let mut v = Array1::zeros(self.inner);
        v[0] = C64::new(1.0, 0.0);
        v
    }
}

/// ⟨Ω, O1 e^{-tH_rad} O2 Ω⟩ for two linear field observables.
#[allow(clippy::too_many_arguments)]
pub fn vacuum_two_point(ops: &FockOps, k1: FieldKind, c1: usize, x1: &[f64; 3], k2: FieldKind, c2: usize, x2: &[f64; 3], t: f64) -> f64 {
    let o1 = ops.field_outer(k1, c1, x1);
    let o2 = ops.field_outer(k2, c2, x2);
    let mut acc = 0.0;
    for i in 0..ops.outer.dim() {
        let st = &ops.outer.states[i];
        let energy: f64 = st.iter().enumerate().map(|(o, &n)| ops.omega(o) * n as f64).sum();
        acc += o1[[i, 0]] * (-t * energy).exp() * o2[[i, 0]];
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleVariant {
    /// Spin-1/2 operator with the εψ_ε-regularized spin flip.
    Full { eps: f64 },
    /// No vector potential; B_axis on the diagonal and the modulus of the
    /// other two components off the diagonal.
    Perp { eps: f64, axis: usize },
    /// Spin flip by the constant -ε_sf, no B coupling.
    Toy { eps_sf: f64 },
    /// Spinless, minimally coupled.
    Spinless,
    /// Spinless, no coupling to A.
    Decoupled,
}

impl OracleVariant {
    fn spinful(&self) -> bool {
        !matches!(self, OracleVariant::Spinless | OracleVariant::Decoupled)
    }

    fn with_a(&self) -> bool {
        matches!(self, OracleVariant::Full { .. } | OracleVariant::Toy { .. } | OracleVariant::Spinless)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry {
    /// Fiber at total momentum p.
    Fiber { p: [f64; 3] },
    /// One-dimensional periodic lattice along x with a site potential.
    Lattice {
        lattice: LatticeSpec,
        #[serde(default)]
        potential: Vec<f64>,
    },
}

fn diag_spin_terms(ops: &FockOps, variant: OracleVariant, pos: &[f64; 3]) -> Result<Option<[[CMatrix; 2]; 2]>> {
    let e = ops.spec.model.coupling;
    let d = ops.inner;
    let blocks = match variant {
        OracleVariant::Spinless | OracleVariant::Decoupled => return Ok(None),
        OracleVariant::Toy { eps_sf } => {
            let z = CMatrix::zeros((d, d));
            let off = linalg::identity(d).mapv(|z| -eps_sf * z);
            [[z.clone(), off.clone()], [off, z]]
        }
        OracleVariant::Full { eps } => {
            let b1 = real_to_complex(&ops.field(FieldKind::B, 0, pos));
            let b2 = real_to_complex(&ops.field(FieldKind::B, 1, pos));
            let b3 = real_to_complex(&ops.field(FieldKind::B, 2, pos));
            let reg = if eps > 0.0 && e != 0.0 {
                let (vals, vecs) = eigh_real(&ops.b_perp_square(0, 1, pos))?;
                let vecs = real_to_complex(&vecs);
                linalg::spectral_apply(&vals, &vecs, |l| C64::new(if 0.5 * e.abs() * l.max(0.0).sqrt() < 0.5 * eps { eps } else { 0.0 }, 0.0))
            } else if eps > 0.0 {
                linalg::identity(d).mapv(|z| eps * z)
            } else {
                CMatrix::zeros((d, d))
            };
            let off = |sigma: f64| -> CMatrix {
                let mut m = &b1 - &b2.mapv(|z| I * sigma * z);
                m.mapv_inplace(|z| -0.5 * e * z);
                m + &reg
            };
            [[b3.mapv(|z| -0.5 * e * z), off(1.0)], [off(-1.0), b3.mapv(|z| 0.5 * e * z)]]
        }
        OracleVariant::Perp { eps, axis } => {
            if axis > 2 {
                return Err(Error::InvalidParameter(format!("axis {axis}")));
            }
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let bd = real_to_complex(&ops.field(FieldKind::B, axis, pos));
            let (vals, vecs) = eigh_real(&ops.b_perp_square(a, b, pos))?;
            let vecs = real_to_complex(&vecs);
            let off = linalg::spectral_apply(&vals, &vecs, |l| {
                let m = 0.5 * e.abs() * l.max(0.0).sqrt();
                let reg = if eps > 0.0 && m < 0.5 * eps { eps } else { 0.0 };
                C64::new(-(m + reg), 0.0)
            });
            [[bd.mapv(|z| -0.5 * e * z), off.clone()], [off, bd.mapv(|z| 0.5 * e * z)]]
        }
    };
    Ok(Some(blocks))
}

fn occupation_label(ops: &FockOps, i: usize) -> String {
    ops.outer.label(i)
}

/// Truncated-Fock Hamiltonian for a variant on a geometry. Spinful basis
/// index = spin slot · (sites · D) + site · D + Fock index.
pub fn build_truncated_pf(spec: &FockSpec, geometry: &Geometry, variant: OracleVariant) -> Result<HermitianOperator> {
    let ops = FockOps::new(spec)?;
    let d = ops.inner;
    let n_spin = if variant.spinful() { 2 } else { 1 };
    let e = spec.model.coupling;
    match geometry {
        Geometry::Fiber { p } => {
            check_dim(n_spin * d, DIMENSION_CAP)?;
            let h0 = ops.fiber_kinetic(*p, variant.with_a()) + real_to_complex(&ops.h_rad());
            let mut m = CMatrix::zeros((n_spin * d, n_spin * d));
            let mut labels = Vec::with_capacity(n_spin * d);
            match diag_spin_terms(&ops, variant, &[0.0; 3])? {
                None => {
                    m.assign(&h0);
                    labels.extend((0..d).map(|i| occupation_label(&ops, i)));
                }
                Some(blocks) => {
                    for (r, row) in blocks.iter().enumerate() {
                        for (c, blk) in row.iter().enumerate() {
                            let mut view = m.slice_mut(s![r * d..(r + 1) * d, c * d..(c + 1) * d]);
                            view += blk;
                            if r == c {
                                view += &h0;
                            }
                        }
                    }
                    for sl in ["+", "-"] {
                        labels.extend((0..d).map(|i| format!("s{sl}:{}", occupation_label(&ops, i))));
                    }
                }
            }
            HermitianOperator::new(m, labels)
        }
        Geometry::Lattice { lattice, potential } => {
            lattice.validate()?;
            if lattice.dim != 1 {
                return Err(Error::Unsupported("lattice times Fock space is one-dimensional".into()));
            }
            if !potential.is_empty() && potential.len() != lattice.sites {
                return Err(Error::InvalidParameter(format!("{} potential values for {} sites", potential.len(), lattice.sites)));
            }
            for mode in &spec.model.modes {
                let w = mode.k[0] * lattice.length / (2.0 * std::f64::consts::PI);
                if (w - w.round()).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!("mode k = {:?} is not periodic on the box", mode.k)));
                }
            }
            let n = lattice.sites;
            let block = n * d;
            check_dim(n_spin * block, DIMENSION_CAP)?;
            let h = lattice.spacing();
            let hop = 0.5 / (h * h);
            let h_rad = real_to_complex(&ops.h_rad());
            let rule = gauss_legendre(8)?;
            let mut m = CMatrix::zeros((n_spin * block, n_spin * block));
            for site in 0..n {
                let x = [site as f64 * h, 0.0, 0.0];
                let v = potential.get(site).copied().unwrap_or(0.0);
                let mut diag = h_rad.clone();
                for i in 0..d {
                    diag[[i, i]] += 2.0 * hop + v;
                }
                let spin = diag_spin_terms(&ops, variant, &x)?;
                for r in 0..n_spin {
                    for c in 0..n_spin {
                        let (r0, c0) = (r * block + site * d, c * block + site * d);
                        let mut view = m.slice_mut(s![r0..r0 + d, c0..c0 + d]);
                        if r == c {
                            view += &diag;
                        }
                        if let Some(b) = &spin {
                            view += &b[r][c];
                        }
                    }
                }
                // link to the right neighbour
                let u = if variant.with_a() && e != 0.0 {
                    let mut coef = vec![0.0; spec.model.n_oscillators()];
                    for (node, w) in rule.0.iter().zip(&rule.1) {
                        let y = [x[0] + 0.5 * h * (1.0 + node), 0.0, 0.0];
                        for (c, a) in coef.iter_mut().zip(ops.field_coefficients(FieldKind::A, 0, &y)) {
                            *c += 0.5 * h * w * a;
                        }
                    }
                    let flux = real_to_complex(&ops.restrict(&ops.linear_outer(&coef)));
                    linalg::hermitian_function(&flux, |l| C64::from_polar(1.0, -e * l))?
                } else {
                    linalg::identity(d)
                };
                let nb = (site + 1) % n;
                let ud = linalg::adjoint(&u);
                for r in 0..n_spin {
                    let (a0, b0) = (r * block + site * d, r * block + nb * d);
                    let mut fwd = m.slice_mut(s![a0..a0 + d, b0..b0 + d]);
                    fwd.scaled_add(C64::new(-hop, 0.0), &u);
                    let mut bwd = m.slice_mut(s![b0..b0 + d, a0..a0 + d]);
                    bwd.scaled_add(C64::new(-hop, 0.0), &ud);
                }
            }
            let mut labels = Vec::with_capacity(n_spin * block);
            for r in 0..n_spin {
                for site in 0..n {
                    for i in 0..d {
                        let sl = if !variant.spinful() { "" } else if r == 0 { "s+:" } else { "s-:" };
                        labels.push(format!("{sl}x{site}:{}", occupation_label(&ops, i)));
                    }
                }
            }
            HermitianOperator::new(m, labels)
        }
    }
}

/// Coordinates of a fiber test vector in the basis of `build_truncated_pf`.
pub fn test_vector_state(ops: &FockOps, v: &TestVector, spinful: bool) -> Result<Array1<C64>> {
    if v.spatial.is_some() {
        return Err(Error::Unsupported("fiber test vectors carry no spatial part".into()));
    }
    let d = ops.inner;
    let mut field = Array1::<C64>::zeros(d);
    for term in &v.field.terms {
        let mut occ = vec![0u8; ops.outer.n_osc];
        for &(o, n) in &term.occ {
            if o >= occ.len() {
                return Err(Error::Unsupported(format!("oscillator {o} outside the model")));
            }
            occ[o] = occ[o].saturating_add(n.min(255) as u8);
        }
        let total: usize = occ.iter().map(|&n| n as usize).sum();
        if total > ops.spec.cutoff {
            return Err(Error::Unsupported(format!("occupation {total} above cutoff {}", ops.spec.cutoff)));
        }
        let i = ops.outer.index_of(&occ).expect("state within cutoff");
        field[i] += term.coef;
    }
    if !spinful {
        return Ok(field.mapv(|z| z * v.spinor[0]));
    }
    let mut out = Array1::<C64>::zeros(2 * d);
    for sigma in [1i8, -1] {
        let slot = spin_slot(sigma);
        out.slice_mut(s![slot * d..(slot + 1) * d]).assign(&field.mapv(|z| z * v.spinor[slot]));
    }
    Ok(out)
}

/// (Φ, e^{-tH(P)} Ψ) on the truncated fiber.
pub fn fock_matrix_element(spec: &FockSpec, p: [f64; 3], variant: OracleVariant, phi: &TestVector, psi: &TestVector, t: f64) -> Result<C64> {
    let ops = FockOps::new(spec)?;
    let h = build_truncated_pf(spec, &Geometry::Fiber { p }, variant)?;
    let spinful = variant.spinful();
    let u = test_vector_state(&ops, phi, spinful)?;
    let v = test_vector_state(&ops, psi, spinful)?;
    Ok(h.spectral()?.matrix_element(t, &u, &v))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergedValue {
    pub value: C64,
    pub cutoff: usize,
    /// |value(M) - value(M - 2)| at the accepted cutoff.
    pub change: f64,
    pub dim: usize,
    pub history: Vec<(usize, C64)>,
    pub converged: bool,
}

/// Raises the cutoff in steps of two until consecutive values differ by
/// less than `tol`.
#[allow(clippy::too_many_arguments)]
pub fn converged_matrix_element(
    model: &FieldModel,
    p: [f64; 3],
    variant: OracleVariant,
    phi: &TestVector,
    psi: &TestVector,
    t: f64,
    tol: f64,
    start_cutoff: usize,
    max_cutoff: usize,
) -> Result<ConvergedValue> {
    let occ = phi.field.max_total_occupation().max(psi.field.max_total_occupation()) as usize;
    let mut m = start_cutoff.max(occ);
    let mut history: Vec<(usize, C64)> = Vec::new();
    loop {
        let spec = FockSpec { model: model.clone(), cutoff: m };
        let v = fock_matrix_element(&spec, p, variant, phi, psi, t)?;
        history.push((m, v));
        let n = history.len();
        let dim = FockOps::new(&spec)?.inner * if variant.spinful() { 2 } else { 1 };
        if n >= 2 {
            let change = (history[n - 1].1 - history[n - 2].1).norm();
            if change < tol || m + 2 > max_cutoff {
                return Ok(ConvergedValue { value: v, cutoff: m, change, dim, converged: change < tol, history });
            }
        }
        m += 2;
    }
}

/// Full-space (F, e^{-tH}G) for vacuum-field wave packets, assembled from
/// the fibers: ∫ conj F̂(P) Ĝ(P) (s_F Ω, e^{-tH(P)} s_G Ω) d³P. The Gaussian
/// weight |F̂ Ĝ| is integrated by an n_quad³ Gauss-Hermite rule.
#[allow(clippy::too_many_arguments)]
pub fn packet_matrix_element(
    spec: &FockSpec,
    variant: OracleVariant,
    f: &TestVector,
    g: &TestVector,
    t: f64,
    n_quad: usize,
) -> Result<C64> {
    let (Some(sf), Some(sg)) = (&f.spatial, &g.spatial) else {
        return Err(Error::InvalidParameter("packet matrix element needs spatial parts".into()));
    };
    if sf.center.len() != 3 || sg.center.len() != 3 {
        return Err(Error::InvalidParameter("packets must be three dimensional".into()));
    }
    if !(f.field.is_vacuum() && g.field.is_vacuum()) {
        return Err(Error::Unsupported("packet matrix element with a non-vacuum field part".into()));
    }
    let mom = |s: &crate::pf_mc::SpatialPart| -> [f64; 3] {
        let mut p = [0.0; 3];
        for (o, v) in p.iter_mut().zip(&s.momentum) {
            *o = *v;
        }
        p
    };
    let (pf, pg) = (mom(sf), mom(sg));
    let (af, ag) = (sf.width * sf.width, sg.width * sg.width);
    let a = af + ag;
    let mu: Vec<f64> = (0..3).map(|i| (af * pf[i] + ag * pg[i]) / a).collect();
    let r: f64 = (0..3).map(|i| af * (mu[i] - pf[i]).powi(2) + ag * (mu[i] - pg[i]).powi(2)).sum();
    let pi = std::f64::consts::PI;
    let mass = (2.0 * af / pi).powf(0.75) * (2.0 * ag / pi).powf(0.75) * (-r).exp() * (pi / a).powf(1.5);
    let sd = (0.5 / a).sqrt();
    // F̂(P) carries the phase e^{-i(P - p)·c}.
    let phase = |s: &crate::pf_mc::SpatialPart, p0: &[f64; 3], q: &[f64; 3]| -> C64 {
        let arg: f64 = (0..3).map(|i| -(q[i] - p0[i]) * s.center[i]).sum();
        C64::from_polar(1.0, arg)
    };
    let ops = FockOps::new(spec)?;
    let spinful = variant.spinful();
    let strip = |v: &TestVector| TestVector { spatial: None, ..v.clone() };
    let u = test_vector_state(&ops, &strip(f), spinful)?;
    let v = test_vector_state(&ops, &strip(g), spinful)?;
    let (nodes, weights) = crate::field::gauss_hermite(n_quad)?;
    let mut points = Vec::with_capacity(n_quad.pow(3));
    for i in 0..n_quad {
        for j in 0..n_quad {
            for k in 0..n_quad {
                let q = [mu[0] + sd * nodes[i], mu[1] + sd * nodes[j], mu[2] + sd * nodes[k]];
                points.push((q, weights[i] * weights[j] * weights[k]));
            }
        }
    }
    use rayon::prelude::*;
    let terms: Vec<Result<C64>> = points
        .par_iter()
        .map(|(q, w)| {
            let h = build_truncated_pf(spec, &Geometry::Fiber { p: *q }, variant)?;
            let m = h.spectral()?.matrix_element(t, &u, &v);
            Ok(*w * phase(sf, &pf, q).conj() * phase(sg, &pg, q) * m)
        })
        .collect();
    let mut acc = C64::new(0.0, 0.0);
    for x in terms {
        acc += x?;
    }
    Ok(acc * mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_sizes() {
        let b = FockBasis::new(4, 6).unwrap();
        assert_eq!(b.dim(), 210);
        assert_eq!(b.dim_below(3), 35);
        assert_eq!(b.states[0], vec![0, 0, 0, 0]);
    }
}
