//! Brute-force finite-dimensional reference values: lattice Pauli
//! operators, truncated-Fock Hamiltonians and dense spectral calculus.

mod checks;
mod fock;
mod lattice;

pub use checks::{
    energy_inequality_report, lattice_comparison, LatticeComparison, LatticeComparisonConfig, positivity_check, InequalityConfig, InequalityReport, InequalityRow, PositivityConfig,
    PositivityReport,
};
pub use fock::{
    build_truncated_pf, converged_matrix_element, fock_matrix_element, packet_matrix_element, test_vector_state, vacuum_two_point, ConvergedValue,
    FockBasis, FockOps, FockSpec, Geometry, OracleVariant,
};
pub use lattice::{build_pauli_lattice, gauss_legendre, lattice_vector, LatticeSpec};

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::linalg::{self, CMatrix};
use crate::{Error, Result};

/// Default cap on dense dimensions.
pub const DIMENSION_CAP: usize = 4096;

const HERMITIAN_TOL: f64 = 1e-12;

/// Dense Hermitian matrix with one label per basis vector.
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    pub matrix: CMatrix,
    pub labels: Vec<String>,
}

#[derive(Serialize)]
struct OperatorJson<'a> {
    dim: usize,
    labels: &'a [String],
    /// Row-major [re, im] pairs.
    entries: Vec<[f64; 2]>,
}

impl HermitianOperator {
    /// Symmetrizes away rounding and checks the assembly first.
    pub fn new(mut matrix: CMatrix, labels: Vec<String>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "matrix {}x{} with {} labels",
                matrix.nrows(),
                matrix.ncols(),
                labels.len()
            )));
        }
        linalg::check_hermitian(&matrix, HERMITIAN_TOL)?;
        linalg::symmetrize(&mut matrix);
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate basis label {l}")));
            }
        }
        Ok(HermitianOperator { matrix, labels })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn spectral(&self) -> Result<Spectral> {
        let (vals, vecs) = linalg::eigh(&self.matrix)?;
        Ok(Spectral { vals, vecs })
    }

    pub fn to_json(&self) -> String {
        let entries = self.matrix.iter().map(|z| [z.re, z.im]).collect();
        serde_json::to_string(&OperatorJson { dim: self.dim(), labels: &self.labels, entries }).expect("serializable")
    }
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub vals: Array1<f64>,
    pub vecs: CMatrix,
}

impl Spectral {
    pub fn ground_energy(&self) -> f64 {
        self.vals[0]
    }

    pub fn semigroup(&self, t: f64) -> CMatrix {
        let e0 = self.vals[0];
        // shifted for range, then restored
        let mut m = linalg::spectral_apply(&self.vals, &self.vecs, |l| C64::new((-t * (l - e0)).exp(), 0.0));
        m.mapv_inplace(|z| z * (-t * e0).exp());
        m
    }

    /// e^{-tH} v without forming the matrix.
    pub fn apply(&self, t: f64, v: &Array1<C64>) -> Array1<C64> {
        let vh = self.vecs.t().mapv(|z| z.conj());
        let mut c = vh.dot(v);
        for (ci, l) in c.iter_mut().zip(self.vals.iter()) {
            *ci *= (-t * l).exp();
        }
        self.vecs.dot(&c)
    }

    /// (u, e^{-tH} v).
    pub fn matrix_element(&self, t: f64, u: &Array1<C64>, v: &Array1<C64>) -> C64 {
        let w = self.apply(t, v);
        u.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
    }
}

pub fn semigroup(h: &HermitianOperator, t: f64) -> Result<CMatrix> {
    Ok(h.spectral()?.semigroup(t))
}

pub fn ground_energy(h: &HermitianOperator) -> Result<f64> {
    let vals = ndarray_linalg::EigValsh::eigvalsh(&h.matrix, ndarray_linalg::UPLO::Lower)
        .map_err(|e| Error::Eigen(e.to_string()))?;
    Ok(vals[0])
}

/// ψ_ε of a Hermitian matrix: spectral indicator of |λ| < ε/2.
pub fn spectral_indicator(m: &CMatrix, eps: f64) -> Result<CMatrix> {
    linalg::hermitian_function(m, |l| C64::new(if l.abs() < 0.5 * eps { 1.0 } else { 0.0 }, 0.0))
}

/// ‖(e^{-tA/n} e^{-tB/n})^n - e^{-t(A+B)}‖_max for each n.
pub fn trotter_deviation(a: &CMatrix, b: &CMatrix, t: f64, ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    let exact = linalg::hermitian_function(&(a + b), |l| C64::new((-t * l).exp(), 0.0))?;
    let (va, ea) = linalg::eigh(a)?;
    let (vb, eb) = linalg::eigh(b)?;
    ns.iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidParameter("n = 0".into()));
            }
            let s = t / n as f64;
            let fa = linalg::spectral_apply(&va, &ea, |l| C64::new((-s * l).exp(), 0.0));
            let fb = linalg::spectral_apply(&vb, &eb, |l| C64::new((-s * l).exp(), 0.0));
            let step = fa.dot(&fb);
            let mut prod = linalg::identity(a.nrows());
            for _ in 0..n {
                prod = prod.dot(&step);
            }
            Ok((n, linalg::max_abs(&(&prod - &exact))))
        })
        .collect()
}

pub(crate) fn real_to_complex(m: &Array2<f64>) -> CMatrix {
    m.mapv(|x| C64::new(x, 0.0))
}

pub(crate) fn check_dim(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::DimensionOverflow { dim, cap });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semigroup_of_diagonal() {
        let m = Array2::from_diag(&Array1::from(vec![C64::new(-1.0, 0.0), C64::new(2.0, 0.0)]));
        let h = HermitianOperator::new(m, vec!["a".into(), "b".into()]).unwrap();
        let s = semigroup(&h, 0.3).unwrap();
        assert!((s[[0, 0]].re - 0.3_f64.exp()).abs() < 1e-14);
        assert!((s[[1, 1]].re - (-0.6_f64).exp()).abs() < 1e-14);
        assert!(s[[0, 1]].norm() < 1e-15);
        let s0 = semigroup(&h, 0.0).unwrap();
        assert!(linalg::max_abs(&(&s0 - &linalg::identity(2))) < 1e-15);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let m = linalg::identity(2);
        assert!(HermitianOperator::new(m, vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn indicator_vanishes_off_window() {
        let m = Array2::from_diag(&Array1::from(vec![C64::new(0.3, 0.0), C64::new(-0.5, 0.0)]));
        let p = spectral_indicator(&m, 0.4).unwrap();
        assert!(p.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }
}
