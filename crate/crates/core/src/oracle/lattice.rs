use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{check_dim, HermitianOperator, DIMENSION_CAP};
use crate::linalg::eigh_real;
use crate::pauli_fk::{psi_eps, PauliCoefficients};
use crate::process::Spin;
use crate::{Error, Result};

/// Periodic cubic lattice [0, L)^d with n sites per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dim: usize,
    pub length: f64,
    pub sites: usize,
}

impl LatticeSpec {
    pub fn new(dim: usize, length: f64, sites: usize) -> Result<Self> {
        let s = LatticeSpec { dim, length, sites };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.sites < 3 || !(self.length > 0.0) {
            return Err(Error::InvalidGrid(format!("lattice {self:?}")));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.sites as f64
    }

    pub fn n_sites(&self) -> usize {
        self.sites.pow(self.dim as u32)
    }

    /// Multi-index of a flat site index, axis 0 fastest.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut s = site;
        (0..self.dim)
            .map(|_| {
                let c = s % self.sites;
                s /= self.sites;
                c
            })
            .collect()
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.sites + (c % self.sites))
    }

    pub fn position(&self, site: usize) -> Vec<f64> {
        let h = self.spacing();
        self.coords(site).iter().map(|&c| c as f64 * h).collect()
    }

    /// Neighbour of `site` one step up along `axis`, wrapping around.
    pub fn up(&self, site: usize, axis: usize) -> usize {
        let mut c = self.coords(site);
        c[axis] = (c[axis] + 1) % self.sites;
        self.site_index(&c)
    }
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Quadrature("zero nodes".into()));
    }
    let mut j = Array2::<f64>::zeros((n, n));
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[[k, k - 1]] = b;
        j[[k - 1, k]] = b;
    }
    let (nodes, vecs) = eigh_real(&j)?;
    let weights = (0..n).map(|i| 2.0 * vecs[[0, i]] * vecs[[0, i]]).collect();
    Ok((nodes.to_vec(), weights))
}

/// ∫ a_axis along the link from x to x + h e_axis.
fn link_flux(coeffs: &PauliCoefficients, x: &[f64], axis: usize, h: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let d = x.len();
    let mut y = x.to_vec();
    let mut a = vec![0.0; d];
    let mut acc = 0.0;
    for (u, w) in rule.0.iter().zip(&rule.1) {
        y[axis] = x[axis] + 0.5 * h * (1.0 + u);
        coeffs.field.a(&y, &mut a);
        acc += w * a[axis];
    }
    0.5 * h * acc
}

fn spin_label(s: Spin) -> char {
    if s == 1 {
        '+'
    } else {
        '-'
    }
}

/// (1/2)(-i∇ - a)² + V - (1/2)σb3 on the lattice, with spin-flip entries
/// -(1/2)(b1 - iσb2) + εψ_ε. Link phases are e^{-i∫a} over each link.
/// Basis index = spin slot · n_sites + site.
pub fn build_pauli_lattice(coeffs: &PauliCoefficients, spec: &LatticeSpec) -> Result<HermitianOperator> {
    spec.validate()?;
    if coeffs.dim() != spec.dim {
        return Err(Error::InvalidParameter(format!("field dimension {} vs lattice {}", coeffs.dim(), spec.dim)));
    }
    let ns = spec.n_sites();
    check_dim(2 * ns, DIMENSION_CAP)?;
    let h = spec.spacing();
    let hop = 0.5 / (h * h);
    let rule = gauss_legendre(8)?;
    let eps = coeffs.eps;
    let mut m = Array2::<C64>::zeros((2 * ns, 2 * ns));
    for site in 0..ns {
        let x = spec.position(site);
        let (b, v) = coeffs.field.b_and_v(&x);
        for (slot, sigma) in [1 as Spin, -1].into_iter().enumerate() {
            let i = slot * ns + site;
            m[[i, i]] += C64::new(2.0 * hop * spec.dim as f64 + v - 0.5 * sigma as f64 * b[2], 0.0);
            let z = -0.5 * C64::new(b[0], -(sigma as f64) * b[1]);
            let reg = if eps > 0.0 { eps * psi_eps(z, eps) } else { 0.0 };
            m[[i, (1 - slot) * ns + site]] += z + reg;
        }
        for axis in 0..spec.dim {
            let nb = spec.up(site, axis);
            let phase = C64::from_polar(1.0, -link_flux(coeffs, &x, axis, h, &rule));
            for slot in 0..2 {
                let (i, j) = (slot * ns + site, slot * ns + nb);
                m[[i, j]] -= hop * phase;
                m[[j, i]] -= hop * phase.conj();
            }
        }
    }
    let labels = (0..2 * ns)
        .map(|k| {
            let (slot, site) = (k / ns, k % ns);
            format!("s{}:{:?}", spin_label(if slot == 0 { 1 } else { -1 }), spec.coords(site))
        })
        .collect();
    HermitianOperator::new(m, labels)
}

/// Samples a spinor function on the lattice sites in the operator's basis order.
pub fn lattice_vector(spec: &LatticeSpec, g: &dyn Fn(&[f64], Spin) -> C64) -> Array1<C64> {
    let ns = spec.n_sites();
    Array1::from_shape_fn(2 * ns, |k| {
        let sigma = if k < ns { 1 } else { -1 };
        g(&spec.position(k % ns), sigma)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli_fk::ConstantField;
    use std::sync::Arc;

    #[test]
    fn legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8).unwrap();
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn constant_b3_splits_spectrum() {
        let spec = LatticeSpec::new(1, 4.0, 8).unwrap();
        let free = PauliCoefficients::new(Arc::new(ConstantField { a: vec![0.0], b: [0.0; 3], v: 0.0 }), 0.0).unwrap();
        let beta = 0.7;
        let split = PauliCoefficients::new(Arc::new(ConstantField { a: vec![0.0], b: [0.0, 0.0, beta], v: 0.0 }), 0.0).unwrap();
        let e0 = build_pauli_lattice(&free, &spec).unwrap().spectral().unwrap().vals;
        let e1 = build_pauli_lattice(&split, &spec).unwrap().spectral().unwrap().vals;
        let mut expect: Vec<f64> = (0..8).flat_map(|i| [e0[2 * i] - 0.5 * beta, e0[2 * i] + 0.5 * beta]).collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in e1.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(e0[0].abs() < 1e-12);
    }
}
