//! Experiment runner behind the `spinfk` binary.
//!
//! A run is fully determined by an [`ExperimentConfig`]: the experiment
//! kind with its parameters, the master seed and the path count. Reports
//! are JSON; tabular series go to CSV files next to the report.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::field::{hypercontractivity_check, mot_summability, FieldModel};
use crate::integrators::ito_suite;
use crate::oracle::{
    converged_matrix_element, energy_inequality_report, lattice_comparison, packet_matrix_element, positivity_check,
    FockSpec, InequalityConfig, LatticeComparisonConfig, OracleVariant, PositivityConfig,
};
use crate::pauli_fk::{sigma_f_generator_check, GaussianProposal, Spinor1d};
use crate::pf_mc::{
    bound_check, domination_check, epsilon_sequence, fiber_matrix_element, pf_matrix_element, toy_matrix_element,
    McConfig, SpatialPart, TestVector,
};
use crate::process::{process_statistics, Spin, TimeGrid};
use crate::{Error, McEstimate, Result, C64};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

fn config_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "config_schema")]
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Sample count; each experiment has its own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    PauliFkVsLattice(LatticeParams),
    GeneratorCheck(GeneratorParams),
    PfVsFock(PfParams),
    FiberVsFock(FiberParams),
    Toy(ToyParams),
    Inequalities(InequalityParams),
    Positivity(PositivityParams),
    ItoSuite(ItoParams),
    Hypercontractivity(HyperParams),
    Domination(DominationParams),
    BoundConstants(BoundParams),
    ProcessStatistics(ProcessParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::PauliFkVsLattice(_) => "pauli_fk_vs_lattice",
            Experiment::GeneratorCheck(_) => "generator_check",
            Experiment::PfVsFock(_) => "pf_vs_fock",
            Experiment::FiberVsFock(_) => "fiber_vs_fock",
            Experiment::Toy(_) => "toy",
            Experiment::Inequalities(_) => "inequalities",
            Experiment::Positivity(_) => "positivity",
            Experiment::ItoSuite(_) => "ito_suite",
            Experiment::Hypercontractivity(_) => "hypercontractivity",
            Experiment::Domination(_) => "domination",
            Experiment::BoundConstants(_) => "bound_constants",
            Experiment::ProcessStatistics(_) => "process_statistics",
        }
    }

    fn default_paths(&self) -> Option<usize> {
        match self {
            Experiment::PauliFkVsLattice(_) => Some(200_000),
            Experiment::GeneratorCheck(_) => Some(100_000),
            Experiment::PfVsFock(_) | Experiment::FiberVsFock(_) | Experiment::Toy(_) => Some(20_000),
            Experiment::ItoSuite(_) => Some(10_000),
            Experiment::Domination(_) | Experiment::BoundConstants(_) | Experiment::ProcessStatistics(_) => Some(100_000),
            Experiment::Inequalities(_) | Experiment::Positivity(_) | Experiment::Hypercontractivity(_) => None,
        }
    }
}

/// Single mode k = (0.6, 0, 0.8), weight 0.01, e = 0.3, massless.
pub fn default_model() -> FieldModel {
    FieldModel::single_mode([0.6, 0.0, 0.8], 0.01, 1.0, 0.3, 0.0).expect("default model is valid")
}

fn default_phi() -> TestVector {
    TestVector::vacuum([C64::new(0.8, 0.0), C64::new(0.36, 0.48)])
}

fn default_psi() -> TestVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    TestVector::vacuum([C64::new(s, 0.0), C64::new(0.0, s)])
}

fn default_momenta() -> Vec<[f64; 3]> {
    vec![[0.0; 3], [0.4, 0.0, 0.0]]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeParams {
    pub length: f64,
    pub sites: usize,
    pub t: f64,
    pub eps: f64,
    pub n_steps: usize,
    pub field_seed: u64,
    pub harmonics: usize,
    pub amps: [f64; 3],
    pub b1_offset: f64,
    pub v_offset: f64,
    pub x0: f64,
    pub sigma0: Spin,
    pub smoothing: f64,
    pub g_center: f64,
    pub g_width: f64,
    /// Extra n_steps values for the time-step series.
    pub n_steps_series: Vec<usize>,
}

impl Default for LatticeParams {
    fn default() -> Self {
        let c = LatticeComparisonConfig::standard();
        LatticeParams {
            length: c.length,
            sites: c.sites,
            t: c.t,
            eps: c.eps,
            n_steps: c.n_steps,
            field_seed: c.field_seed,
            harmonics: c.harmonics,
            amps: c.amps,
            b1_offset: c.b1_offset,
            v_offset: c.v_offset,
            x0: c.x0,
            sigma0: c.sigma0,
            smoothing: c.smoothing,
            g_center: c.g_center,
            g_width: c.g_width,
            n_steps_series: vec![],
        }
    }
}

impl LatticeParams {
    pub fn to_config(&self, n_paths: usize, seed: u64) -> LatticeComparisonConfig {
        LatticeComparisonConfig {
            length: self.length,
            sites: self.sites,
            t: self.t,
            eps: self.eps,
            n_paths,
            n_steps: self.n_steps,
            seed,
            field_seed: self.field_seed,
            harmonics: self.harmonics,
            amps: self.amps,
            b1_offset: self.b1_offset,
            v_offset: self.v_offset,
            x0: self.x0,
            sigma0: self.sigma0,
            smoothing: self.smoothing,
            g_center: self.g_center,
            g_width: self.g_width,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    pub eps: Vec<f64>,
    pub t: f64,
    pub n_steps: usize,
    /// f = g = exp(-x²/2w²) · spinor.
    pub width: f64,
    pub spinor: [C64; 2],
    pub proposal_sd: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams { eps: vec![0.0, 0.5, 1.0], t: 0.2, n_steps: 10, width: 1.0, spinor: [C64::new(1.0, 0.0), C64::new(0.5, 0.0)], proposal_sd: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfParams {
    pub model: FieldModel,
    pub eps: f64,
    /// When set, the toy operator with this ε_sf replaces the full one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_sf: Option<f64>,
    pub t: f64,
    pub n_steps: usize,
    pub f: TestVector,
    pub g: TestVector,
    pub cutoff: usize,
    /// Gauss-Hermite points per momentum axis.
    pub n_quad: usize,
    /// Tolerance on the change from `cutoff` to `cutoff + 2`.
    pub tol: f64,
}

impl Default for PfParams {
    fn default() -> Self {
        PfParams {
            model: default_model(),
            eps: 0.2,
            eps_sf: None,
            t: 0.5,
            n_steps: 50,
            f: default_phi().with_spatial(SpatialPart { center: vec![0.0; 3], width: 0.7, momentum: vec![0.3, 0.0, 0.0] }),
            g: default_psi().with_spatial(SpatialPart { center: vec![0.2, 0.0, 0.0], width: 0.9, momentum: vec![0.0, 0.0, -0.2] }),
            cutoff: 4,
            n_quad: 5,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiberParams {
    pub model: FieldModel,
    pub eps: f64,
    pub t: f64,
    pub n_steps: usize,
    pub momenta: Vec<[f64; 3]>,
    pub phi: TestVector,
    pub psi: TestVector,
    pub tol: f64,
    pub start_cutoff: usize,
    pub max_cutoff: usize,
    pub replicates: usize,
    pub analytic_y1: bool,
    /// Also report the ε sequence at the first momentum.
    pub eps_sequence: bool,
}

impl Default for FiberParams {
    fn default() -> Self {
        FiberParams {
            model: default_model(),
            eps: 0.2,
            t: 0.5,
            n_steps: 50,
            momenta: default_momenta(),
            phi: default_phi(),
            psi: default_psi(),
            tol: 1e-6,
            start_cutoff: 2,
            max_cutoff: 10,
            replicates: 1,
            analytic_y1: false,
            eps_sequence: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    pub model: FieldModel,
    pub eps_sf: f64,
    pub t: f64,
    pub n_steps: usize,
    pub momenta: Vec<[f64; 3]>,
    pub phi: TestVector,
    pub psi: TestVector,
    pub tol: f64,
    pub start_cutoff: usize,
    pub max_cutoff: usize,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            model: default_model(),
            eps_sf: 0.5,
            t: 0.5,
            n_steps: 50,
            momenta: default_momenta(),
            phi: default_phi(),
            psi: default_psi(),
            tol: 1e-6,
            start_cutoff: 2,
            max_cutoff: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalityParams {
    pub couplings: Vec<f64>,
    pub fiber_cutoff: usize,
    pub lattice_cutoff: usize,
    pub p: [f64; 3],
}

impl Default for InequalityParams {
    fn default() -> Self {
        let s = InequalityConfig::standard().expect("standard inequality config");
        InequalityParams { couplings: s.couplings, fiber_cutoff: s.fiber_cutoff, lattice_cutoff: s.lattice_cutoff, p: s.p }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositivityParams {
    pub eps_sf: f64,
    pub coupling: f64,
    pub t: f64,
    pub sites: usize,
    pub length: f64,
    pub n_quad: usize,
    /// Also run ε_sf = 0 and require exact zero spin-flip blocks.
    pub control: bool,
}

impl Default for PositivityParams {
    fn default() -> Self {
        PositivityParams { eps_sf: 0.5, coupling: 0.5, t: 2.0, sites: 16, length: 8.0, n_quad: 8, control: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItoParams {
    pub n_steps: usize,
    pub t: f64,
}

impl Default for ItoParams {
    fn default() -> Self {
        ItoParams { n_steps: 50, t: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    /// (q, p) pairs; c = sqrt((q-1)/(p-1)).
    pub pairs: Vec<[f64; 2]>,
    pub trials: usize,
    pub max_degree: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams { pairs: vec![[2.0, 4.0], [2.0, 10.0]], trials: 1000, max_degree: 6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominationParams {
    pub model: FieldModel,
    pub eps: f64,
    pub t: f64,
    pub n_steps: usize,
}

impl Default for DominationParams {
    fn default() -> Self {
        DominationParams { model: default_model(), eps: 0.2, t: 0.5, n_steps: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub model: FieldModel,
    pub eps: f64,
    pub t: f64,
    pub n_steps: usize,
    pub replicates: usize,
    pub summability_tol: f64,
    pub max_terms: usize,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams { model: default_model(), eps: 0.2, t: 0.5, n_steps: 50, replicates: 16, summability_tol: 1e-12, max_terms: 400 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessParams {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), pass, detail: detail.into() }
    }
}

/// Plot-ready table written as CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(name: &str, header: &[&str]) -> Self {
        Series { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
        w.write_record(&self.header).map_err(csv_error)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: String,
    /// The effective config after command-line overrides.
    pub config: ExperimentConfig,
    pub overrides: BTreeMap<String, Value>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub result: Value,
    pub wall_time_s: f64,
}

struct Outcome {
    checks: Vec<Check>,
    notes: Vec<String>,
    result: Value,
    series: Vec<Series>,
    model_hash: Option<String>,
}

impl Outcome {
    fn new(result: Value) -> Self {
        Outcome { checks: vec![], notes: vec![], result, series: vec![], model_hash: None }
    }
}

/// Parses a config, reporting JSON syntax and type errors with line and column.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config { line: e.line(), column: e.column(), msg: e.to_string() })?;
    validate(&cfg)?;
    Ok(cfg)
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config { line: 0, column: 0, msg: msg.into() }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.schema_version != CONFIG_SCHEMA_VERSION {
        return Err(config_error(format!("unsupported schema_version {}", cfg.schema_version)));
    }
    if cfg.paths == Some(0) {
        return Err(config_error("paths must be positive"));
    }
    if cfg.workers == Some(0) {
        return Err(config_error("workers must be positive"));
    }
    let models: Vec<&FieldModel> = match &cfg.experiment {
        Experiment::PfVsFock(p) => vec![&p.model],
        Experiment::FiberVsFock(p) => vec![&p.model],
        Experiment::Toy(p) => vec![&p.model],
        Experiment::Domination(p) => vec![&p.model],
        Experiment::BoundConstants(p) => vec![&p.model],
        _ => vec![],
    };
    for m in models {
        m.validate().map_err(|e| config_error(e.to_string()))?;
    }
    Ok(())
}

fn est_json(e: &McEstimate) -> Value {
    json!({ "re": e.mean.re, "im": e.mean.im, "stderr": e.stderr, "n_paths": e.n, "seed": e.seed })
}

fn c_json(z: C64) -> Value {
    json!({ "re": z.re, "im": z.im })
}

/// Runs one experiment on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig, overrides: BTreeMap<String, Value>) -> Result<(Report, Vec<Series>)> {
    validate(cfg)?;
    let start = Instant::now();
    let paths = cfg.paths.or(cfg.experiment.default_paths()).unwrap_or(0);
    let seed = cfg.seed;
    let out = match &cfg.experiment {
        Experiment::PauliFkVsLattice(p) => run_lattice(p, paths, seed)?,
        Experiment::GeneratorCheck(p) => run_generator(p, paths, seed)?,
        Experiment::PfVsFock(p) => run_pf(p, paths, seed)?,
        Experiment::FiberVsFock(p) => run_fiber(p, paths, seed)?,
        Experiment::Toy(p) => run_toy(p, paths, seed)?,
        Experiment::Inequalities(p) => run_inequalities(p)?,
        Experiment::Positivity(p) => run_positivity(p)?,
        Experiment::ItoSuite(p) => run_ito(p, paths, seed)?,
        Experiment::Hypercontractivity(p) => run_hyper(p, seed)?,
        Experiment::Domination(p) => run_domination(p, paths, seed)?,
        Experiment::BoundConstants(p) => run_bounds(p, paths, seed)?,
        Experiment::ProcessStatistics(_) => run_process(paths, seed)?,
    };
    let pass = out.checks.iter().all(|c| c.pass);
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: cfg.experiment.kind().into(),
        config: cfg.clone(),
        overrides,
        seed,
        model_hash: out.model_hash,
        pass,
        checks: out.checks,
        notes: out.notes,
        result: out.result,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((report, out.series))
}

fn run_lattice(p: &LatticeParams, paths: usize, seed: u64) -> Result<Outcome> {
    let r = lattice_comparison(&p.to_config(paths, seed))?;
    let mut out = Outcome::new(json!({ "mc": est_json(&r.mc), "oracle": c_json(r.oracle), "z": r.z, "rel_stderr": r.rel_stderr }));
    out.checks.push(Check::new("mc within 3 stderr of lattice", r.z <= 3.0, format!("z = {:.3}", r.z)));
    out.checks.push(Check::new("stderr/|value| <= 5%", r.rel_stderr <= 0.05, format!("{:.4}", r.rel_stderr)));
    if !p.n_steps_series.is_empty() {
        let mut s = Series::new("n_steps", &["n_steps", "mc_re", "mc_im", "stderr", "oracle_re", "oracle_im"]);
        for &n in &p.n_steps_series {
            let mut c = p.to_config(paths, seed);
            c.n_steps = n;
            let r = lattice_comparison(&c)?;
            s.rows.push(vec![n as f64, r.mc.mean.re, r.mc.mean.im, r.mc.stderr, r.oracle.re, r.oracle.im]);
        }
        out.series.push(s);
    }
    Ok(out)
}

fn run_generator(p: &GeneratorParams, paths: usize, seed: u64) -> Result<Outcome> {
    let (w, sp) = (p.width, p.spinor);
    let f: Spinor1d = std::sync::Arc::new(move |x: f64, s: Spin| {
        let r = (-x * x / (2.0 * w * w)).exp();
        sp[if s == 1 { 0 } else { 1 }] * r
    });
    let grid = TimeGrid::new(p.t, p.n_steps)?;
    let proposal = GaussianProposal { center: vec![0.0], sd: p.proposal_sd };
    let mut rows = Vec::new();
    let mut out = Outcome::new(Value::Null);
    let mut s = Series::new("eps", &["eps", "lhs_re", "lhs_im", "mc_re", "mc_im", "stderr", "z"]);
    for &eps in &p.eps {
        let c = sigma_f_generator_check(eps, &f, &f, p.t, &proposal, paths, grid, seed)?;
        let z = c.rhs.z_score(c.lhs.mean);
        out.checks.push(Check::new(format!("eps = {eps}: |mc - quadrature| <= 3 stderr"), z <= 3.0, format!("z = {z:.3}")));
        rows.push(json!({ "eps": eps, "quadrature": c_json(c.lhs.mean), "mc": est_json(&c.rhs), "z": z }));
        s.rows.push(vec![eps, c.lhs.mean.re, c.lhs.mean.im, c.rhs.mean.re, c.rhs.mean.im, c.rhs.stderr, z]);
    }
    out.result = json!({ "rows": rows });
    out.series.push(s);
    Ok(out)
}

fn run_pf(p: &PfParams, paths: usize, seed: u64) -> Result<Outcome> {
    let grid = TimeGrid::new(p.t, p.n_steps)?;
    let cfg = McConfig::new(paths, grid, seed);
    let (variant, mc) = match p.eps_sf {
        Some(eps_sf) => (OracleVariant::Toy { eps_sf }, toy_matrix_element(eps_sf, None, &p.f, &p.g, p.t, &p.model, &cfg, None)?),
        None => (OracleVariant::Full { eps: p.eps }, pf_matrix_element(&p.f, &p.g, p.t, p.eps, &p.model, &cfg, None)?),
    };
    let spec = FockSpec { model: p.model.clone(), cutoff: p.cutoff };
    let oracle = packet_matrix_element(&spec, variant, &p.f, &p.g, p.t, p.n_quad)?;
    let spec2 = FockSpec { model: p.model.clone(), cutoff: p.cutoff + 2 };
    let change = (packet_matrix_element(&spec2, variant, &p.f, &p.g, p.t, p.n_quad)? - oracle).norm();
    let z = mc.z_score(oracle);
    let mut out = Outcome::new(json!({ "mc": est_json(&mc), "oracle": c_json(oracle), "cutoff": p.cutoff, "cutoff_change": change, "z": z }));
    out.model_hash = Some(p.model.content_hash());
    out.checks.push(Check::new("mc within 3 stderr of fiber-integrated oracle", z <= 3.0, format!("z = {z:.3}")));
    out.checks.push(Check::new("oracle cutoff converged", change <= p.tol, format!("change {change:.2e} from cutoff {} to {}", p.cutoff, p.cutoff + 2)));
    out.notes.push("oracle integrates the truncated fibers over total momentum; test vectors must have a vacuum field part".into());
    Ok(out)
}

fn fiber_rows(
    model: &FieldModel,
    momenta: &[[f64; 3]],
    variant: OracleVariant,
    phi: &TestVector,
    psi: &TestVector,
    t: f64,
    conv: (f64, usize, usize),
    mc: &dyn Fn([f64; 3]) -> Result<McEstimate>,
    out: &mut Outcome,
) -> Result<Vec<Value>> {
    let mut rows = Vec::new();
    let mut s = Series::new("momenta", &["p1", "p2", "p3", "mc_re", "mc_im", "stderr", "oracle_re", "oracle_im", "cutoff", "z"]);
    for &p in momenta {
        let c = converged_matrix_element(model, p, variant, phi, psi, t, conv.0, conv.1, conv.2)?;
        let e = mc(p)?;
        let z = e.z_score(c.value);
        out.checks.push(Check::new(format!("P = {p:?}: mc within 3 stderr"), z <= 3.0, format!("z = {z:.3}")));
        out.checks.push(Check::new(
            format!("P = {p:?}: cutoff converged"),
            c.converged,
            format!("change {:.2e} at cutoff {}", c.change, c.cutoff),
        ));
        rows.push(json!({ "p": p, "mc": est_json(&e), "oracle": c_json(c.value), "cutoff": c.cutoff, "change": c.change, "dim": c.dim, "z": z }));
        s.rows.push(vec![p[0], p[1], p[2], e.mean.re, e.mean.im, e.stderr, c.value.re, c.value.im, c.cutoff as f64, z]);
    }
    out.series.push(s);
    Ok(rows)
}

fn run_fiber(p: &FiberParams, paths: usize, seed: u64) -> Result<Outcome> {
    let grid = TimeGrid::new(p.t, p.n_steps)?;
    let mut cfg = McConfig::new(paths, grid, seed);
    cfg.replicates = p.replicates.max(1);
    cfg.analytic_y1 = p.analytic_y1;
    let mut out = Outcome::new(Value::Null);
    out.model_hash = Some(p.model.content_hash());
    let mc = |q: [f64; 3]| fiber_matrix_element(q, &p.phi, &p.psi, p.t, p.eps, &p.model, &cfg);
    let conv = (p.tol, p.start_cutoff, p.max_cutoff);
    let rows = fiber_rows(&p.model, &p.momenta, OracleVariant::Full { eps: p.eps }, &p.phi, &p.psi, p.t, conv, &mc, &mut out)?;
    let mut result = json!({ "rows": rows });
    if p.eps_sequence {
        let q = p.momenta.first().copied().unwrap_or([0.0; 3]);
        let seq = epsilon_sequence(q, &p.phi, &p.psi, p.t, &p.model, &cfg)?;
        let mut s = Series::new("eps_sequence", &["eps", "mc_re", "mc_im", "stderr"]);
        for (eps, e) in &seq {
            s.rows.push(vec![*eps, e.mean.re, e.mean.im, e.stderr]);
        }
        result["eps_sequence"] = seq.iter().map(|(eps, e)| json!({ "eps": eps, "mc": est_json(e) })).collect();
        out.series.push(s);
        out.notes.push("the ε sequence is reported as is; no extrapolated ε = 0 value is formed".into());
    }
    out.result = result;
    Ok(out)
}

fn run_toy(p: &ToyParams, paths: usize, seed: u64) -> Result<Outcome> {
    let grid = TimeGrid::new(p.t, p.n_steps)?;
    let cfg = McConfig::new(paths, grid, seed);
    let mut out = Outcome::new(Value::Null);
    out.model_hash = Some(p.model.content_hash());
    let degenerate = p.eps_sf == 0.0;
    if degenerate {
        out.notes.push("degenerate branch: eps_sf = 0, spin sectors decouple, only jump-free paths contribute".into());
    }
    let mc = |q: [f64; 3]| toy_matrix_element(p.eps_sf, Some(q), &p.phi, &p.psi, p.t, &p.model, &cfg, None);
    let conv = (p.tol, p.start_cutoff, p.max_cutoff);
    let rows = fiber_rows(&p.model, &p.momenta, OracleVariant::Toy { eps_sf: p.eps_sf }, &p.phi, &p.psi, p.t, conv, &mc, &mut out)?;
    out.result = json!({ "rows": rows, "degenerate_branch": degenerate });
    Ok(out)
}

fn run_inequalities(p: &InequalityParams) -> Result<Outcome> {
    let mut cfg = InequalityConfig::standard()?;
    cfg.couplings = p.couplings.clone();
    cfg.fiber_cutoff = p.fiber_cutoff;
    cfg.lattice_cutoff = p.lattice_cutoff;
    cfg.p = p.p;
    let r = energy_inequality_report(&cfg)?;
    let mut out = Outcome::new(serde_json::to_value(&r).expect("report serializes"));
    out.model_hash = Some(cfg.model.content_hash());
    out.checks.push(Check::new("all asserted orderings hold to 1e-9", r.violations == 0, format!("min margin {:.3e}", r.min_margin)));
    let mut s = Series::new("margins", &["coupling", "lhs", "rhs", "margin", "asserted"]);
    for row in &r.rows {
        s.rows.push(vec![row.coupling, row.lhs, row.rhs, row.margin, if row.asserted { 1.0 } else { 0.0 }]);
    }
    out.series.push(s);
    out.notes.push("violations on truncated operators would indicate a truncation inconsistency".into());
    Ok(out)
}

fn run_positivity(p: &PositivityParams) -> Result<Outcome> {
    let build = |eps_sf: f64| -> Result<PositivityConfig> {
        let mut c = PositivityConfig::standard(eps_sf, p.coupling)?;
        c.t = p.t;
        c.sites = p.sites;
        c.length = p.length;
        c.n_quad = p.n_quad;
        Ok(c)
    };
    let cfg = build(p.eps_sf)?;
    let r = positivity_check(&cfg)?;
    let mut out = Outcome::new(json!({ "main": r }));
    out.model_hash = Some(cfg.model.content_hash());
    out.checks.push(Check::new("all entries > 1e-12 max entry", r.positive, format!("min ratio {:.3e}", r.min_ratio)));
    if p.control {
        let c = positivity_check(&build(0.0)?)?;
        out.checks.push(Check::new("eps_sf = 0 control has zero spin blocks", c.zero_spin_blocks, format!("max off-diagonal {:.1e}", c.max_spin_offdiag)));
        out.result["control"] = serde_json::to_value(&c).expect("report serializes");
    }
    Ok(out)
}

fn run_ito(p: &ItoParams, paths: usize, seed: u64) -> Result<Outcome> {
    let r = ito_suite(paths, p.n_steps, p.t, seed)?;
    let mut out = Outcome::new(serde_json::to_value(&r).expect("report serializes"));
    out.checks.push(Check::new("pure-jump Itô residual at machine precision", r.pure_jump_max <= 1e-12, format!("{:.2e}", r.pure_jump_max)));
    out.checks.push(Check::new("pure-jump product rule at machine precision", r.product_max <= 1e-12, format!("{:.2e}", r.product_max)));
    out.checks.push(Check::new(
        "mixed-case residual halving ratio in [1.7, 2.3]",
        (1.7..=2.3).contains(&r.ms_ratio),
        format!("mean-square ratio {:.3}, absolute ratio {:.3}", r.ms_ratio, r.abs_ratio),
    ));
    let mut s = Series::new("residual_vs_n_steps", &["n_steps", "mean_square", "mean_abs"]);
    s.rows.push(vec![p.n_steps as f64, r.mixed_ms_coarse, r.mixed_abs_coarse]);
    s.rows.push(vec![2.0 * p.n_steps as f64, r.mixed_ms_fine, r.mixed_abs_fine]);
    out.series.push(s);
    out.notes.push("the mixed-case ratio uses the mean-square residual; the mean absolute residual halves by sqrt 2".into());
    Ok(out)
}

fn run_hyper(p: &HyperParams, seed: u64) -> Result<Outcome> {
    let mut out = Outcome::new(Value::Null);
    let mut rows = Vec::new();
    for (i, &[q, pp]) in p.pairs.iter().enumerate() {
        let c = ((q - 1.0) / (pp - 1.0)).sqrt();
        let r = hypercontractivity_check(c, pp, q, p.trials, p.max_degree, seed.wrapping_add(i as u64))?;
        out.checks.push(Check::new(format!("(q, p) = ({q}, {pp}): no violations"), r.pass, format!("max ratio {:.6}", r.max_ratio)));
        rows.push(serde_json::to_value(&r).expect("report serializes"));
    }
    out.result = json!({ "rows": rows });
    Ok(out)
}

fn run_domination(p: &DominationParams, paths: usize, seed: u64) -> Result<Outcome> {
    let r = domination_check(&p.model, p.eps, TimeGrid::new(p.t, p.n_steps)?, paths, seed)?;
    let mut out = Outcome::new(serde_json::to_value(&r).expect("report serializes"));
    out.model_hash = Some(p.model.content_hash());
    out.checks.push(Check::new("|e^X| <= e^X⊥ on every tuple", r.violations == 0, format!("{} violations, max gap {:.3e}", r.violations, r.max_gap)));
    Ok(out)
}

fn run_bounds(p: &BoundParams, paths: usize, seed: u64) -> Result<Outcome> {
    let r = bound_check(&p.model, p.eps, TimeGrid::new(p.t, p.n_steps)?, paths, p.replicates, seed)?;
    let m = mot_summability(&p.model, p.eps, p.t, p.summability_tol, p.max_terms);
    let mut out = Outcome::new(json!({ "bound": r, "summability": m }));
    out.model_hash = Some(p.model.content_hash());
    out.checks.push(Check::new(
        "‖e^X‖² <= c1 c2 on every path",
        r.violations == 0,
        format!("{} violations ({} raw), max ratio {:.3e}", r.violations, r.raw_exceedances, r.max_ratio),
    ));
    out.checks.push(Check::new("summability series finite", m.finite, format!("value {:.6e} after {} terms", m.value, m.terms_used)));
    Ok(out)
}

fn run_process(paths: usize, seed: u64) -> Result<Outcome> {
    let r = process_statistics(paths, seed)?;
    let mut out = Outcome::new(serde_json::to_value(&r).expect("report serializes"));
    for c in &r.checks {
        out.checks.push(Check::new(c.name.clone(), c.pass, format!("{:.5} vs {:.5} ± {:.1e}", c.observed, c.expected, c.stderr)));
    }
    out.checks.push(Check::new("jump count chi-square", r.chi_square.pass, format!("p = {:.4}", r.chi_square.p_value)));
    out.checks.push(Check::new("spin parity", r.parity_violations == 0, format!("{} violations", r.parity_violations)));
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "spinfk", version, about = "Feynman-Kac experiments for spin-1/2 Pauli and Pauli-Fierz semigroups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn csv_path(report: &Path, series: &str) -> PathBuf {
    let stem = report.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report.with_file_name(format!("{stem}.{series}.csv"))
}

/// Runs with explicit overrides and writes the report; returns the report.
pub fn run_with_overrides(mut cfg: ExperimentConfig, seed: Option<u64>, paths: Option<usize>, workers: Option<usize>, out: Option<PathBuf>) -> Result<Report> {
    let mut overrides = BTreeMap::new();
    if let Some(s) = seed {
        overrides.insert("seed".into(), json!(s));
        cfg.seed = s;
    }
    if let Some(p) = paths {
        overrides.insert("paths".into(), json!(p));
        cfg.paths = Some(p);
    }
    if let Some(w) = workers {
        overrides.insert("workers".into(), json!(w));
        cfg.workers = Some(w);
    }
    if let Some(o) = out {
        overrides.insert("output".into(), json!(o));
        cfg.output = Some(o);
    }
    validate(&cfg)?;
    let (report, series) = match cfg.workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
            pool.install(|| run_experiment(&cfg, overrides))?
        }
        None => run_experiment(&cfg, overrides)?,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, text + "\n")?;
            for s in &series {
                s.write_csv(&csv_path(path, &s.name))?;
            }
        }
        None => println!("{text}"),
    }
    Ok(report)
}

fn summary(report: &Report) {
    for c in &report.checks {
        eprintln!("[{}] {}: {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    eprintln!("{}: {} in {:.1}s", report.kind, if report.pass { "pass" } else { "FAIL" }, report.wall_time_s);
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run { config, seed, paths, workers, out } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return EXIT_CONFIG;
                }
            };
            let cfg = match parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return EXIT_CONFIG;
                }
            };
            match run_with_overrides(cfg, seed, paths, workers, out) {
                Ok(report) => {
                    summary(&report);
                    if report.pass {
                        EXIT_PASS
                    } else {
                        EXIT_FAIL
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}
