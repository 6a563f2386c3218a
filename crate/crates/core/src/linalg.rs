//! Dense Hermitian helpers over LAPACK.

use ndarray::{Array1, Array2, ShapeBuilder};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::{Error, Result};

pub type CMatrix = Array2<C64>;

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

pub fn check_hermitian(m: &CMatrix, rel_tol: f64) -> Result<()> {
    let norm = max_abs(m);
    let deviation = hermitian_deviation(m);
    if deviation > rel_tol * norm.max(1.0) {
        return Err(Error::NotHermitian { deviation, norm });
    }
    Ok(())
}

/// Eigenvalues ascending and eigenvectors as columns.
///
/// The LAPACK wrapper reads a row-major complex matrix as its transpose,
/// which for a Hermitian matrix is the conjugate, so the input is copied
/// into column-major order first.
pub fn eigh(m: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let mut f = Array2::<C64>::zeros(m.raw_dim().f());
    f.assign(m);
    f.eigh(UPLO::Lower).map_err(|e| Error::Eigen(e.to_string()))
}

pub fn eigh_real(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    m.eigh(UPLO::Lower).map_err(|e| Error::Eigen(e.to_string()))
}

/// V diag(f(λ)) V^†.
pub fn spectral_apply(vals: &Array1<f64>, vecs: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = vals.len();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let fj = f(vals[j]);
        scaled.column_mut(j).mapv_inplace(|z| z * fj);
    }
    let vh = vecs.t().mapv(|z| z.conj());
    scaled.dot(&vh)
}

/// f(H) for Hermitian H.
pub fn hermitian_function(m: &CMatrix, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    let (vals, vecs) = eigh(m)?;
    Ok(spectral_apply(&vals, &vecs, f))
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> CMatrix {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in i..n {
            let a = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            m[[i, j]] = a;
            m[[j, i]] = a.conj();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_of_diagonal_is_elementwise() {
        let mut m = CMatrix::zeros((3, 3));
        for i in 0..3 {
            m[[i, i]] = C64::new(i as f64, 0.0);
        }
        let e = hermitian_function(&m, |x| C64::new((-x).exp(), 0.0)).unwrap();
        for i in 0..3 {
            assert!((e[[i, i]].re - (-(i as f64)).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_x_exponential() {
        let mut m = CMatrix::zeros((2, 2));
        m[[0, 1]] = C64::new(1.0, 0.0);
        m[[1, 0]] = C64::new(1.0, 0.0);
        let e = hermitian_function(&m, |x| C64::new((-0.7 * x).exp(), 0.0)).unwrap();
        assert!((e[[0, 0]].re - 0.7_f64.cosh()).abs() < 1e-13);
        assert!((e[[0, 1]].re + 0.7_f64.sinh()).abs() < 1e-13);
    }

    #[test]
    fn complex_eigenvectors_are_not_conjugated() {
        let mut m = CMatrix::zeros((2, 2));
        m[[0, 1]] = C64::new(0.0, -1.0);
        m[[1, 0]] = C64::new(0.0, 1.0);
        let (vals, vecs) = eigh(&m).unwrap();
        for j in 0..2 {
            let r = m.dot(&vecs.column(j)) - vecs.column(j).mapv(|z| z * vals[j]);
            assert!(r.iter().all(|z| z.norm() < 1e-14));
        }
    }
}
