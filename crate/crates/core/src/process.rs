//! Brownian paths, Poisson jump times and the spin path sigma0 * (-1)^N_t.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, PathRng};
use crate::{Error, Result};

/// Spin value, always +1 or -1.
pub type Spin = i8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_max: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        if !(t_max.is_finite() && t_max >= 0.0) {
            return Err(Error::InvalidGrid(format!("t_max = {t_max}")));
        }
        Ok(TimeGrid { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_max
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    pub fn refined(&self) -> Self {
        TimeGrid { t_max: self.t_max, n_steps: 2 * self.n_steps }
    }
}

/// Brownian path on a grid. Positions are stored flat, node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePath {
    pub grid: TimeGrid,
    pub dim: usize,
    pub start: Vec<f64>,
    positions: Vec<f64>,
    increments: Vec<f64>,
}

impl ParticlePath {
    /// Build from increments; positions are their running sums.
    pub fn from_increments(start: &[f64], grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        let d = start.len();
        if d == 0 || increments.len() != d * grid.n_steps() {
            return Err(Error::InvalidParameter(format!(
                "expected {} increments for d = {d}",
                d * grid.n_steps()
            )));
        }
        let mut positions = Vec::with_capacity(d * (grid.n_steps() + 1));
        positions.extend_from_slice(start);
        for i in 0..grid.n_steps() {
            for mu in 0..d {
                let prev = positions[i * d + mu];
                positions.push(prev + increments[i * d + mu]);
            }
        }
        Ok(ParticlePath { grid, dim: d, start: start.to_vec(), positions, increments })
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn increment(&self, i: usize) -> &[f64] {
        &self.increments[i * self.dim..(i + 1) * self.dim]
    }

    pub fn end(&self) -> &[f64] {
        self.position(self.grid.n_steps())
    }

    pub fn midpoint(&self, i: usize) -> Vec<f64> {
        let (a, b) = (self.position(i), self.position(i + 1));
        a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// Linear interpolation between the neighbouring grid nodes.
    pub fn position_at(&self, t: f64) -> Vec<f64> {
        let n = self.grid.n_steps();
        let dt = self.grid.dt();
        if dt == 0.0 {
            return self.start.clone();
        }
        let u = (t / dt).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        let frac = u - i as f64;
        let (a, b) = (self.position(i), self.position(i + 1));
        a.iter().zip(b).map(|(x, y)| x + frac * (y - x)).collect()
    }
}

/// Poisson jump times on (0, t_max].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub rate: f64,
    pub t_max: f64,
    pub jump_times: Vec<f64>,
}

impl JumpRecord {
    pub fn new(rate: f64, t_max: f64, jump_times: Vec<f64>) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::InvalidParameter(format!("jump rate {rate} must be positive")));
        }
        let sorted = jump_times.windows(2).all(|w| w[0] < w[1]);
        let inside = jump_times.iter().all(|&s| s > 0.0 && s <= t_max);
        if !sorted || !inside {
            return Err(Error::InvalidParameter("jump times must be increasing in (0, t_max]".into()));
        }
        Ok(JumpRecord { rate, t_max, jump_times })
    }

    /// N_t = #{s <= t}.
    pub fn count(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s <= t)
    }

    /// N_{t-} = #{s < t}.
    pub fn count_left(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&s| s < t)
    }

    pub fn total(&self) -> usize {
        self.jump_times.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinPath {
    pub sigma0: Spin,
    pub jumps: JumpRecord,
}

fn parity(sigma0: Spin, n: usize) -> Spin {
    if n % 2 == 0 {
        sigma0
    } else {
        -sigma0
    }
}

impl SpinPath {
    pub fn new(sigma0: Spin, jumps: JumpRecord) -> Result<Self> {
        if sigma0 != 1 && sigma0 != -1 {
            return Err(Error::InvalidParameter(format!("spin {sigma0} is not +1 or -1")));
        }
        Ok(SpinPath { sigma0, jumps })
    }

    /// Spin just before the j-th jump.
    pub fn before_jump(&self, j: usize) -> Spin {
        parity(self.sigma0, j)
    }

    pub fn at_end(&self) -> Spin {
        parity(self.sigma0, self.jumps.total())
    }

    /// Right-continuous value on the grid without range checks.
    pub fn right_unchecked(&self, t: f64) -> Spin {
        parity(self.sigma0, self.jumps.count(t))
    }
}

pub fn spin_at(spin: &SpinPath, t: f64, side: Side) -> Result<Spin> {
    let t_max = spin.jumps.t_max;
    if !(0.0..=t_max).contains(&t) {
        return Err(Error::TimeOutOfRange { t, t_max });
    }
    let n = match side {
        Side::Right => spin.jumps.count(t),
        Side::Left => spin.jumps.count_left(t),
    };
    Ok(parity(spin.sigma0, n))
}

pub fn sample_brownian_with(start: &[f64], grid: TimeGrid, rng: &mut PathRng) -> ParticlePath {
    let d = start.len();
    let sd = grid.dt().sqrt();
    let increments: Vec<f64> = (0..d * grid.n_steps())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ParticlePath::from_increments(start, grid, increments).expect("increment count matches grid")
}

pub fn sample_brownian(start: &[f64], grid: TimeGrid, seed: u64) -> ParticlePath {
    sample_brownian_with(start, grid, &mut rng::from_seed(seed))
}

/// Exact sampling by exponential inter-arrival times.
pub fn sample_jumps_with(rate: f64, t_max: f64, rng: &mut PathRng) -> Result<JumpRecord> {
    let exp = Exp::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut times = Vec::new();
    let mut s = exp.sample(rng);
    while s <= t_max {
        if s > 0.0 {
            times.push(s);
        }
        s += exp.sample(rng);
    }
    JumpRecord::new(rate, t_max, times)
}

pub fn sample_jumps(rate: f64, t_max: f64, seed: u64) -> Result<JumpRecord> {
    sample_jumps_with(rate, t_max, &mut rng::from_seed(seed))
}

pub fn sample_spin_path_with(sigma0: Spin, rate: f64, t_max: f64, rng: &mut PathRng) -> Result<SpinPath> {
    SpinPath::new(sigma0, sample_jumps_with(rate, t_max, rng)?)
}

/// Brownian path and spin path for one Monte Carlo path index, drawn
/// from independent substreams of the master seed.
pub fn sample_path_pair(
    master: u64,
    index: u64,
    start: &[f64],
    grid: TimeGrid,
    sigma0: Spin,
    rate: f64,
) -> Result<(ParticlePath, SpinPath)> {
    let mut rb = rng::substream(master, rng::Purpose::Brownian, index, 0);
    let mut rj = rng::substream(master, rng::Purpose::Jumps, index, 0);
    let path = sample_brownian_with(start, grid, &mut rb);
    let spin = sample_spin_path_with(sigma0, rate, grid.t_max(), &mut rj)?;
    Ok((path, spin))
}

/// One moment check: observed vs expected with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatCheck {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub stderr: f64,
    pub pass: bool,
}

impl StatCheck {
    fn new(name: &str, samples: &[f64], expected: f64, k: f64) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        StatCheck { name: name.into(), observed: mean, expected, stderr, pass: (mean - expected).abs() <= k * stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Pearson test of counts against Poisson(mean), merging the tail so every
/// bin expects at least five counts.
pub fn poisson_chi_square(counts: &[usize], mean: f64, significance: f64) -> ChiSquare {
    use statrs::distribution::{ContinuousCDF, Discrete, Poisson};
    let n = counts.len() as f64;
    let pois = Poisson::new(mean).expect("positive mean");
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0.0; max + 1];
    for &c in counts {
        observed[c] += 1.0;
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    let mut cum = 0.0;
    for k in 0..=max {
        let p = pois.pmf(k as u64);
        cum += p;
        acc.0 += observed[k];
        acc.1 += n * p;
        if acc.1 >= 5.0 && n * (1.0 - cum) >= 5.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    acc.1 += n * (1.0 - cum).max(0.0);
    bins.push(acc);
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len().saturating_sub(1).max(1);
    let chi = statrs::distribution::ChiSquared::new(dof as f64).expect("positive dof");
    let p_value = 1.0 - chi.cdf(statistic);
    ChiSquare { statistic, dof, p_value, pass: p_value > significance }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProcessStatistics {
    pub samples: usize,
    pub checks: Vec<StatCheck>,
    pub chi_square: ChiSquare,
    pub parity_violations: usize,
}

impl ProcessStatistics {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass) && self.chi_square.pass && self.parity_violations == 0
    }
}

/// Moment, pmf and independence checks of the samplers on `n` draws.
pub fn process_statistics(n: usize, seed: u64) -> Result<ProcessStatistics> {
    use rayon::prelude::*;
    let grid = TimeGrid::new(2.0, 4)?;
    let rows: Vec<Result<([f64; 3], f64, usize, usize, usize)>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let (path, spin) = sample_path_pair(seed, i, &[0.0; 3], grid, 1, 1.0)?;
            let mut r3 = rng::substream(seed, rng::Purpose::Aux, i, 0);
            let n3 = sample_jumps_with(1.0, 3.0, &mut r3)?.total();
            let mut bad = 0;
            for t in [0.0, 0.3, 0.9, 1.0, 1.7, 2.0] {
                if spin_at(&spin, t, Side::Right)? != parity(1, spin.jumps.count(t)) {
                    bad += 1;
                }
            }
            let b1 = path.position(2);
            let b2 = path.end();
            Ok(([b2[0], b1[0] * b2[0], b2[1]], b2[2], spin.jumps.total(), n3, bad))
        })
        .collect();
    let mut bt = Vec::with_capacity(n);
    let mut cov = Vec::with_capacity(n);
    let mut by = Vec::with_capacity(n);
    let mut bz = Vec::with_capacity(n);
    let mut n2 = Vec::with_capacity(n);
    let mut n3 = Vec::with_capacity(n);
    let mut parity_violations = 0;
    for r in rows {
        let (b, z, c2, c3, bad) = r?;
        bt.push(b[0]);
        cov.push(b[1]);
        by.push(b[2]);
        bz.push(z);
        n2.push(c2);
        n3.push(c3);
        parity_violations += bad;
    }
    let n2f: Vec<f64> = n2.iter().map(|&c| c as f64).collect();
    let zero: Vec<f64> = n2.iter().map(|&c| if c == 0 { 1.0 } else { 0.0 }).collect();
    let n3f: Vec<f64> = n3.iter().map(|&c| c as f64).collect();
    let mean_n2 = n2f.iter().sum::<f64>() / n as f64;
    let cross: Vec<f64> = bz.iter().zip(&n2f).map(|(b, c)| b * (c - mean_n2)).collect();
    let checks = vec![
        StatCheck::new("mean B_2 (x)", &bt, 0.0, 4.0),
        StatCheck::new("mean B_2 (y)", &by, 0.0, 4.0),
        StatCheck::new("cov(B_1, B_2) (x)", &cov, 1.0, 4.0),
        StatCheck::new("P(N_2 = 0)", &zero, (-2.0f64).exp(), 4.0),
        StatCheck::new("mean N_3", &n3f, 3.0, 4.0),
        StatCheck::new("cov(B_2 (z), N_2)", &cross, 0.0, 4.0),
    ];
    Ok(ProcessStatistics { samples: n, checks, chi_square: poisson_chi_square(&n2, 2.0, 1e-3), parity_violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_zero_steps() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        let g = TimeGrid::new(1.0, 4).unwrap();
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(4), 1.0);
    }

    #[test]
    fn one_step_path() {
        let g = TimeGrid::new(1.0, 1).unwrap();
        let p = sample_brownian(&[0.5, -1.0], g, 3);
        assert_eq!(p.position(0), &[0.5, -1.0]);
        let inc = p.increment(0);
        assert_eq!(p.end(), &[0.5 + inc[0], -1.0 + inc[1]]);
    }

    #[test]
    fn zero_horizon_has_no_jumps() {
        let j = sample_jumps(1.0, 0.0, 9).unwrap();
        assert!(j.jump_times.is_empty());
        assert_eq!(j.count(0.0), 0);
    }

    #[test]
    fn spin_sides_at_a_jump() {
        let s = SpinPath::new(1, JumpRecord::new(1.0, 1.0, vec![0.5]).unwrap()).unwrap();
        assert_eq!(spin_at(&s, 0.5, Side::Left).unwrap(), 1);
        assert_eq!(spin_at(&s, 0.5, Side::Right).unwrap(), -1);
        assert_eq!(spin_at(&s, 0.2, Side::Right).unwrap(), 1);
        assert!(spin_at(&s, 1.5, Side::Right).is_err());
    }

    #[test]
    fn two_jumps_restore_spin() {
        let s = SpinPath::new(-1, JumpRecord::new(1.0, 1.0, vec![0.2, 0.6]).unwrap()).unwrap();
        assert_eq!(spin_at(&s, 0.9, Side::Right).unwrap(), -1);
        assert_eq!(spin_at(&s, 0.6, Side::Left).unwrap(), 1);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let p = sample_brownian(&[0.0], g, 1);
        assert_eq!(p.position_at(0.5), p.position(2).to_vec());
        let mid = p.position_at(0.125)[0];
        assert!((mid - 0.5 * (p.position(0)[0] + p.position(1)[0])).abs() < 1e-15);
    }
}
