use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;
use spinfk::field::{FieldModel, Mode};
use spinfk::linalg;
use spinfk::oracle::*;
use spinfk::pauli_fk::{ConstantField, PauliCoefficients};
use spinfk::pf_mc::TestVector;
use spinfk::{Error, C64};

fn hermitian(entries: &[(f64, f64)], n: usize) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((n, n));
    let mut k = 0;
    for i in 0..n {
        for j in 0..=i {
            let (re, im) = entries[k];
            k += 1;
            if i == j {
                m[[i, i]] = C64::new(re, 0.0);
            } else {
                m[[i, j]] = C64::new(re, im);
                m[[j, i]] = C64::new(re, -im);
            }
        }
    }
    m
}

proptest! {
    #[test]
    fn indicator_vanishes_when_the_spectrum_avoids_the_window(entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10), eps in 0.01f64..1.0) {
        let mut m = hermitian(&entries, 4);
        let (vals, _) = linalg::eigh(&m).unwrap();
        let shift = 0.5 * eps + 1e-6 - vals[0];
        for i in 0..4 {
            m[[i, i]] += shift;
        }
        let p = spectral_indicator(&m, eps).unwrap();
        prop_assert!(p.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn indicator_is_a_projection(entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 10), eps in 0.01f64..2.0) {
        let m = hermitian(&entries, 4);
        let p = spectral_indicator(&m, eps).unwrap();
        let p2 = p.dot(&p);
        prop_assert!(linalg::max_abs(&(&p2 - &p)) <= 1e-12);
    }

    #[test]
    fn built_fibers_are_hermitian(e in 0.0f64..2.0, p1 in -1.0f64..1.0, eps in 0.0f64..0.5) {
        let model = FieldModel::single_mode([0.6, 0.0, 0.8], 0.1, 1.0, e, 0.0).unwrap();
        let spec = FockSpec { model, cutoff: 2 };
        for v in [OracleVariant::Full { eps }, OracleVariant::Perp { eps, axis: 2 }, OracleVariant::Toy { eps_sf: eps }, OracleVariant::Spinless, OracleVariant::Decoupled] {
            let h = build_truncated_pf(&spec, &Geometry::Fiber { p: [p1, 0.2, 0.0] }, v).unwrap();
            let adj = h.matrix.t().mapv(|z| z.conj());
            prop_assert!(linalg::max_abs(&(&h.matrix - &adj)) == 0.0);
        }
    }
}

#[test]
fn non_hermitian_input_is_rejected() {
    let mut m = Array2::<C64>::zeros((2, 2));
    m[[0, 1]] = C64::new(1.0, 0.0);
    match HermitianOperator::new(m, vec!["a".into(), "b".into()]) {
        Err(Error::NotHermitian { .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn free_fiber_ground_energies() {
    let model = FieldModel::single_mode([0.6, 0.0, 0.8], 0.1, 1.0, 0.0, 0.0).unwrap();
    let spec = FockSpec { model, cutoff: 3 };
    let p = [0.3, -0.2, 0.5];
    let p2: f64 = p.iter().map(|v| v * v).sum();
    let full = build_truncated_pf(&spec, &Geometry::Fiber { p }, OracleVariant::Full { eps: 0.2 }).unwrap();
    assert!((ground_energy(&full).unwrap() - (0.5 * p2 - 0.2)).abs() < 1e-12);
    let toy = build_truncated_pf(&spec, &Geometry::Fiber { p }, OracleVariant::Toy { eps_sf: 0.5 }).unwrap();
    assert!((ground_energy(&toy).unwrap() - (0.5 * p2 - 0.5)).abs() < 1e-12);
    let spinless = build_truncated_pf(&spec, &Geometry::Fiber { p }, OracleVariant::Spinless).unwrap();
    assert!((ground_energy(&spinless).unwrap() - 0.5 * p2).abs() < 1e-12);
}

#[test]
fn constant_potential_lattice_spectrum() {
    let (length, sites, a, eps) = (6.0, 30, 0.3, 0.2);
    let spec = LatticeSpec::new(1, length, sites).unwrap();
    let coeffs = PauliCoefficients::new(Arc::new(ConstantField { a: vec![a], b: [0.0; 3], v: 0.0 }), eps).unwrap();
    let h = build_pauli_lattice(&coeffs, &spec).unwrap();
    let step = length / sites as f64;
    let mut expected: Vec<f64> = (0..sites)
        .flat_map(|m| {
            let k = 2.0 * PI * m as f64 / length;
            let kin = (1.0 - ((k - a) * step).cos()) / (step * step);
            [kin - eps, kin + eps]
        })
        .collect();
    expected.sort_by(f64::total_cmp);
    let vals = h.spectral().unwrap().vals;
    for (v, e) in vals.iter().zip(&expected) {
        assert!((v - e).abs() < 1e-10, "{v} vs {e}");
    }
}

#[test]
fn trotter_error_is_first_order() {
    let a = hermitian(&[(0.5, 0.0), (0.3, 0.2), (-0.4, 0.0), (0.1, -0.5), (0.2, 0.1), (0.9, 0.0)], 3);
    let b = hermitian(&[(-0.2, 0.0), (0.0, 0.7), (0.3, 0.0), (0.6, 0.1), (-0.3, 0.2), (0.1, 0.0)], 3);
    let devs = trotter_deviation(&a, &b, 1.0, &[8, 16, 32, 64]).unwrap();
    for w in devs.windows(2) {
        let ratio = w[0].1 / w[1].1;
        assert!((1.8..2.2).contains(&ratio), "{devs:?}");
    }
    assert!(trotter_deviation(&a, &b, 1.0, &[0]).is_err());
}

#[test]
fn fock_basis_sizes_and_cap() {
    let b = FockBasis::new(4, 3).unwrap();
    assert_eq!(b.dim(), 35);
    assert_eq!(b.index_of(&[0, 0, 0, 0]), Some(0));
    assert_eq!(b.index_of(&[2, 2, 0, 0]), None);
    let k = [1.0, 0.0, 0.0];
    let modes = (0..3).map(|i| Mode { k: [k[0], i as f64, 0.0], w: 0.1, omega: (1.0 + (i * i) as f64).sqrt(), phi_hat: 1.0 }).collect();
    let model = FieldModel::new(modes, 1.0, 0.0).unwrap();
    match build_truncated_pf(&FockSpec { model, cutoff: 6 }, &Geometry::Fiber { p: [0.0; 3] }, OracleVariant::Full { eps: 0.1 }) {
        Err(Error::DimensionOverflow { .. }) => {}
        other => panic!("{:?}", other.map(|h| h.dim())),
    }
}

#[test]
fn semigroup_is_a_contraction_shifted_by_the_ground_energy() {
    let model = FieldModel::single_mode([0.6, 0.0, 0.8], 0.1, 1.0, 1.0, 0.0).unwrap();
    let spec = FockSpec { model, cutoff: 3 };
    let h = build_truncated_pf(&spec, &Geometry::Fiber { p: [0.2, 0.0, 0.0] }, OracleVariant::Full { eps: 0.2 }).unwrap();
    let s = h.spectral().unwrap();
    let e0 = s.ground_energy();
    let g = s.semigroup(0.7);
    let (vals, _) = linalg::eigh(&g).unwrap();
    let top = vals.iter().cloned().fold(f64::MIN, f64::max);
    assert!((top - (-0.7 * e0).exp()).abs() < 1e-10 * top);
    let json: serde_json::Value = serde_json::from_str(&h.to_json()).unwrap();
    assert_eq!(json["dim"].as_u64().unwrap() as usize, h.dim());
}

#[test]
fn spatial_test_vectors_are_not_fiber_states() {
    let model = FieldModel::single_mode([0.6, 0.0, 0.8], 0.1, 1.0, 1.0, 0.0).unwrap();
    let ops = FockOps::new(&FockSpec { model, cutoff: 2 }).unwrap();
    let v = TestVector::vacuum([C64::new(1.0, 0.0); 2])
        .with_spatial(spinfk::pf_mc::SpatialPart { center: vec![0.0; 3], width: 1.0, momentum: vec![] });
    assert!(test_vector_state(&ops, &v, true).is_err());
}
