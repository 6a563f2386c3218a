use std::sync::Arc;

use proptest::prelude::*;
use spinfk::integrators::*;
use spinfk::process::*;
use spinfk::C64;

fn pair(seed: u64, n: usize, t: f64, rate: f64) -> (ParticlePath, SpinPath) {
    sample_path_pair(seed, 0, &[0.4], TimeGrid::new(t, n).unwrap(), 1, rate).unwrap()
}

fn exp_fn() -> (impl Fn(&[f64]) -> f64, impl Fn(&[f64]) -> Vec<f64>, impl Fn(&[f64]) -> Vec<Vec<f64>>) {
    (|x: &[f64]| x[0].exp(), |x: &[f64]| vec![x[0].exp()], |x: &[f64]| vec![vec![x[0].exp()]])
}

proptest! {
    #[test]
    fn stratonovich_of_identity_telescopes(seed in any::<u64>(), n in 1usize..200) {
        let (p, _) = pair(seed, n, 1.3, 1.0);
        let s = stratonovich_integral(|x, out| out[0] = C64::new(x[0], 0.0), &p);
        let exact = 0.5 * (p.end()[0].powi(2) - p.start[0].powi(2));
        prop_assert!((s.re - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        let i = ito_integral(|_, _, out| out[0] = C64::new(1.0, 0.0), &p);
        prop_assert!((i.re - (p.end()[0] - p.start[0])).abs() <= 1e-12);
    }

    #[test]
    fn integrals_are_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (p, s) = pair(seed, 37, 1.0, 2.0);
        let f = |x: &[f64]| x[0].sin();
        let g = |x: &[f64]| x[0] * x[0];
        let lin = |x: &[f64]| a * f(x) + b * g(x);
        let close = |l: C64, r: C64| (l - r).norm() <= 1e-11 * (1.0 + l.norm());

        let ito = |h: &dyn Fn(&[f64]) -> f64| ito_integral(|_, x, out| out[0] = C64::new(h(x), 0.0), &p);
        prop_assert!(close(ito(&lin), a * ito(&f) + b * ito(&g)));
        let st = |h: &dyn Fn(&[f64]) -> f64| stratonovich_integral(|x, out| out[0] = C64::new(h(x), 0.0), &p);
        prop_assert!(close(st(&lin), a * st(&f) + b * st(&g)));
        let leb = |h: &dyn Fn(&[f64]) -> f64| path_lebesgue(|_, x, sg| C64::new(h(x) * sg as f64, 0.0), &p, &s);
        prop_assert!(close(leb(&lin), a * leb(&f) + b * leb(&g)));
        let jmp = |h: &dyn Fn(&[f64]) -> f64| jump_integral(|_, x, sg| C64::new(h(x) * sg as f64, 0.0), &p, &s).unwrap();
        prop_assert!(close(jmp(&lin), a * jmp(&f) + b * jmp(&g)));
    }

    #[test]
    fn integrals_add_over_subintervals(seed in any::<u64>(), half in 1usize..60) {
        let n = 2 * half;
        let (p, _) = pair(seed, n, 2.0, 1.0);
        let incs: Vec<f64> = (0..n).map(|i| p.increment(i)[0]).collect();
        let g1 = TimeGrid::new(1.0, half).unwrap();
        let first = ParticlePath::from_increments(&p.start, g1, incs[..half].to_vec()).unwrap();
        let second = ParticlePath::from_increments(p.position(half), g1, incs[half..].to_vec()).unwrap();
        let a = |x: &[f64], out: &mut [C64]| out[0] = C64::new(x[0].cos(), 0.5 * x[0]);
        let whole = stratonovich_integral(a, &p);
        let parts = stratonovich_integral(a, &first) + stratonovich_integral(a, &second);
        prop_assert!((whole - parts).norm() <= 1e-12 * (1.0 + whole.norm()));
        let f = |_: f64, x: &[f64], out: &mut [C64]| out[0] = C64::new(x[0].tanh(), 0.0);
        let whole = ito_integral(f, &p);
        let parts = ito_integral(f, &first) + ito_integral(f, &second);
        prop_assert!((whole - parts).norm() <= 1e-12 * (1.0 + whole.norm()));
    }

    #[test]
    fn pure_jump_ito_formula_is_exact(seed in any::<u64>(), n in 1usize..60, rate in 0.5f64..6.0, c in -1.0f64..1.0) {
        let (p, s) = pair(seed, n, 1.0, rate);
        let x = Semimartingale { x0: 0.1, terms: vec![PathFunctional::jump(move |t, y, sg| c * (t + y[0]) * sg as f64)] };
        let (value, gradient, hessian) = exp_fn();
        let f = SmoothFn { value: &value, gradient: &gradient, hessian: &hessian };
        let r = ito_formula_residual(&f, &[x], &p, &s).unwrap();
        prop_assert!(r <= 1e-12 * (1.0 + s.jumps.total() as f64), "residual {}", r);
    }

    #[test]
    fn pure_jump_product_rule_is_exact(seed in any::<u64>(), rate in 0.5f64..6.0) {
        let (p, s) = pair(seed, 25, 1.0, rate);
        let z = Semimartingale { x0: 0.5, terms: vec![PathFunctional::jump(|t, _, _| 1.0 - t)] };
        let y = Semimartingale { x0: -2.0, terms: vec![PathFunctional::compensated(|_, x, sg| 0.2 * x[0] * sg as f64)] };
        let r = product_rule_residual(&z, &y, &p, &s).unwrap();
        prop_assert!(r <= 1e-12, "residual {} with {} jumps", r, s.jumps.total());
    }
}

#[test]
fn compensated_count_has_mean_zero() {
    let n = 20_000;
    let vals: Vec<f64> = (0..n)
        .map(|i| {
            let (p, s) = sample_path_pair(77, i, &[0.0], TimeGrid::new(1.5, 10).unwrap(), 1, 2.0).unwrap();
            compensated_jump_integral(|_, _, _| C64::new(1.0, 0.0), &p, &s, 2.0).unwrap().re
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(mean.abs() <= 4.0 * (var / n as f64).sqrt(), "mean {mean}");
    assert!((var - 3.0).abs() < 0.15, "variance {var}");
}

#[test]
fn brownian_ito_residual_shrinks_with_the_grid() {
    let r = ito_suite(2000, 20, 1.0, 4).unwrap();
    assert!(r.pure_jump_max <= 1e-12);
    assert!(r.product_max <= 1e-12);
    assert!((1.5..=2.5).contains(&r.ms_ratio), "{r:?}");
    assert!(r.mixed_ms_fine < r.mixed_ms_coarse);
}

#[test]
fn stratonovich_drivers_are_rejected_by_the_ito_harness() {
    let (p, s) = pair(1, 10, 1.0, 1.0);
    let x = Semimartingale { x0: 0.0, terms: vec![PathFunctional { kind: DriverKind::Stratonovich, integrand: Integrand::Vector(Arc::new(|_, _, _| vec![1.0])) }] };
    let (value, gradient, hessian) = exp_fn();
    let f = SmoothFn { value: &value, gradient: &gradient, hessian: &hessian };
    assert!(ito_formula_residual(&f, &[x], &p, &s).is_err());
}
