//! The ten acceptance criteria at full scale, one line of output each.
//!
//! Run with `cargo test -p spinfk --test acceptance -- --nocapture` to see
//! the lines. Criteria listed in `KNOWN_FAILURES` are expected to fail as
//! specified; the test asserts that they still do, so a change in either
//! direction is noticed.

use std::sync::Arc;
use std::time::Instant;

use spinfk::field::{hypercontractivity_check, mot_summability, FieldModel};
use spinfk::integrators::ito_suite;
use spinfk::oracle::{
    converged_matrix_element, energy_inequality_report, lattice_comparison, positivity_check, InequalityConfig,
    LatticeComparisonConfig, OracleVariant, PositivityConfig,
};
use spinfk::pauli_fk::{sigma_f_generator_check, GaussianProposal, Spinor1d};
use spinfk::pf_mc::{bound_check, domination_check, fiber_matrix_element, toy_matrix_element, McConfig, TestVector};
use spinfk::process::{process_statistics, TimeGrid};
use spinfk::C64;

/// Criterion 9 compares against c₂ exactly as printed, which undercounts
/// the jump weight for |e| < √2 at this ε.
const KNOWN_FAILURES: &[u32] = &[9];

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn model() -> FieldModel {
    FieldModel::single_mode([0.6, 0.0, 0.8], 0.01, 1.0, 0.3, 0.0).unwrap()
}

fn spinors() -> (TestVector, TestVector) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (TestVector::vacuum([C64::new(0.8, 0.0), C64::new(0.36, 0.48)]), TestVector::vacuum([C64::new(s, 0.0), C64::new(0.0, s)]))
}

fn lattice() -> Line {
    let start = Instant::now();
    let cfg = LatticeComparisonConfig::standard();
    assert_eq!((cfg.sites, cfg.n_paths, cfg.n_steps), (64, 200_000, 200));
    let r = lattice_comparison(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: 1,
        name: "Pauli FK vs lattice",
        pass: r.z <= 3.0 && r.rel_stderr <= 0.05 && secs <= 120.0,
        detail: format!("z = {:.2}, stderr/|value| = {:.4}, {secs:.1}s", r.z, r.rel_stderr),
    }
}

fn generator() -> Line {
    let f: Spinor1d = Arc::new(|x: f64, s| {
        let amp = if s == 1 { 1.0 } else { 0.5 };
        C64::new(amp * (-0.5 * x * x).exp(), 0.0)
    });
    let proposal = GaussianProposal { center: vec![0.0], sd: 1.0 };
    let grid = TimeGrid::new(0.2, 10).unwrap();
    let mut zs = Vec::new();
    for eps in [0.0, 0.5, 1.0] {
        let c = sigma_f_generator_check(eps, &f, &f, 0.2, &proposal, 100_000, grid, 1).unwrap();
        zs.push(c.rhs.z_score(c.lhs.mean));
    }
    Line {
        id: 2,
        name: "generator identity",
        pass: zs.iter().all(|&z| z <= 3.0),
        detail: format!("z at eps 0, 0.5, 1 = {:.2}, {:.2}, {:.2}", zs[0], zs[1], zs[2]),
    }
}

fn fiber() -> Line {
    let m = model();
    let (phi, psi) = spinors();
    let cfg = McConfig::new(20_000, TimeGrid::new(0.5, 50).unwrap(), 1);
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [[0.0; 3], [0.4, 0.0, 0.0]] {
        for (label, variant) in [("full", OracleVariant::Full { eps: 0.2 }), ("toy", OracleVariant::Toy { eps_sf: 0.5 })] {
            let c = converged_matrix_element(&m, p, variant, &phi, &psi, 0.5, 1e-6, 2, 10).unwrap();
            let e = match variant {
                OracleVariant::Full { eps } => fiber_matrix_element(p, &phi, &psi, 0.5, eps, &m, &cfg),
                _ => toy_matrix_element(0.5, Some(p), &phi, &psi, 0.5, &m, &cfg, None),
            }
            .unwrap();
            let z = e.z_score(c.value);
            pass &= c.converged && z <= 3.0;
            parts.push(format!("{label} P1={} z={z:.2} M={}", p[0], c.cutoff));
        }
    }
    Line { id: 3, name: "Pauli-Fierz fiber and toy vs truncated Fock", pass, detail: parts.join(", ") }
}

fn domination() -> Line {
    let r = domination_check(&model(), 0.2, TimeGrid::new(0.5, 50).unwrap(), 100_000, 1).unwrap();
    Line {
        id: 4,
        name: "pathwise domination",
        pass: r.violations == 0,
        detail: format!("{} violations in {}, max Re X - X⊥ = {:.3e}", r.violations, r.samples, r.max_gap),
    }
}

fn inequalities() -> Line {
    let cfg = InequalityConfig::standard().unwrap();
    assert_eq!(cfg.couplings, vec![0.25, 0.5, 1.0]);
    let r = energy_inequality_report(&cfg).unwrap();
    let asserted = r.rows.iter().filter(|row| row.asserted);
    let min = asserted.map(|row| row.margin).fold(f64::INFINITY, f64::min);
    Line {
        id: 5,
        name: "energy inequalities",
        pass: r.violations == 0 && min >= -1e-9,
        detail: format!("{} orderings, min asserted margin {min:.3e}", r.rows.len()),
    }
}

fn positivity() -> Line {
    let main = positivity_check(&PositivityConfig::standard(0.5, 0.5).unwrap()).unwrap();
    let control = positivity_check(&PositivityConfig::standard(0.0, 0.5).unwrap()).unwrap();
    Line {
        id: 6,
        name: "positivity improving",
        pass: main.min_ratio > 1e-12 && control.zero_spin_blocks,
        detail: format!("min/max entry {:.3e}, control spin-flip max {:.1e}", main.min_ratio, control.max_spin_offdiag),
    }
}

fn ito() -> Line {
    let r = ito_suite(10_000, 50, 1.0, 1).unwrap();
    Line {
        id: 7,
        name: "Itô suite",
        pass: r.pure_jump_max <= 1e-12 && r.product_max <= 1e-12 && (1.7..=2.3).contains(&r.ms_ratio),
        detail: format!("pure {:.1e}, product {:.1e}, halving ratio {:.3}", r.pure_jump_max, r.product_max, r.ms_ratio),
    }
}

fn hypercontractivity() -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for (q, p) in [(2.0, 4.0), (2.0, 10.0)] {
        let c = ((q - 1.0) / (p - 1.0) as f64).sqrt();
        let r = hypercontractivity_check(c, p, q, 1000, 6, 1).unwrap();
        pass &= r.violations == 0;
        parts.push(format!("(q,p)=({q},{p}): {} violations, max ratio {:.6}", r.violations, r.max_ratio));
    }
    Line { id: 8, name: "hypercontractivity", pass, detail: parts.join("; ") }
}

fn bounds() -> Line {
    let m = model();
    let r = bound_check(&m, 0.2, TimeGrid::new(0.5, 50).unwrap(), 100_000, 16, 1).unwrap();
    let s = mot_summability(&m, 0.2, 0.5, 1e-12, 400);
    Line {
        id: 9,
        name: "bound constants",
        pass: r.violations == 0 && s.finite,
        detail: format!(
            "{} of {} paths over c1 c2 ({} raw), max ratio {:.3e}; summability {:.4e} ({})",
            r.violations,
            r.paths,
            r.raw_exceedances,
            r.max_ratio,
            s.value,
            if s.finite { "finite" } else { "divergent" }
        ),
    }
}

fn process() -> Line {
    let r = process_statistics(100_000, 1).unwrap();
    let worst = r.checks.iter().map(|c| (c.observed - c.expected).abs() / c.stderr).fold(0.0, f64::max);
    Line {
        id: 10,
        name: "Poisson and Brownian statistics",
        pass: r.pass(),
        detail: format!("chi-square p = {:.3}, worst moment |z| = {worst:.2}, parity violations {}", r.chi_square.p_value, r.parity_violations),
    }
}

#[test]
fn acceptance() {
    let runs: [fn() -> Line; 10] = [lattice, generator, fiber, domination, inequalities, positivity, ito, hypercontractivity, bounds, process];
    let mut unexpected = Vec::new();
    for run in runs {
        let l = run();
        let known = KNOWN_FAILURES.contains(&l.id);
        let tag = match (l.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {:>2} {tag}: {}: {}", l.id, l.name, l.detail);
        if l.pass == known {
            unexpected.push(l.id);
        }
    }
    assert!(unexpected.is_empty(), "criteria with an unexpected outcome: {unexpected:?}");
}
