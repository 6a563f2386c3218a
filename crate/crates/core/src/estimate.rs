use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Monte Carlo result: complex mean, its standard error, sample count, seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: C64,
    /// Standard error of the complex mean, sqrt(E|X - mean|^2 / n).
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// Pairwise sum. The split points depend only on the length, so the
/// result is the same whatever produced the slice.
pub fn pairwise_sum(xs: &[C64]) -> C64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut s = C64::new(0.0, 0.0);
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_real(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum_real(&xs[..mid]) + pairwise_sum_real(&xs[mid..])
}

impl McEstimate {
    pub fn from_samples(samples: &[C64], seed: u64) -> Self {
        let n = samples.len();
        if n == 0 {
            return McEstimate { mean: C64::new(0.0, 0.0), stderr: f64::NAN, n, seed };
        }
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean).norm_sqr()).collect();
        let var = if n > 1 { pairwise_sum_real(&dev) / (n - 1) as f64 } else { f64::NAN };
        McEstimate { mean, stderr: (var / n as f64).sqrt(), n, seed }
    }

    pub fn from_real_samples(samples: &[f64], seed: u64) -> Self {
        let c: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_samples(&c, seed)
    }

    /// |self - value| in units of stderr.
    pub fn z_score(&self, value: C64) -> f64 {
        (self.mean - value).norm() / self.stderr
    }

    pub fn agrees_with(&self, value: C64, k: f64) -> bool {
        (self.mean - value).norm() <= k * self.stderr
    }

    pub fn scaled(&self, s: C64) -> Self {
        McEstimate { mean: self.mean * s, stderr: self.stderr * s.norm(), ..*self }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_sum_closely() {
        let xs: Vec<C64> = (0..1000).map(|i| C64::new(i as f64 * 0.1, -(i as f64))).collect();
        let naive: C64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).norm() < 1e-9);
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        let e = McEstimate::from_real_samples(&[2.0; 10], 0);
        assert_eq!(e.mean, C64::new(2.0, 0.0));
        assert_eq!(e.stderr, 0.0);
    }
}

/// Evaluate `sample(i)` for every path index and reduce to an estimate.
///
/// Paths run on the current rayon pool. Samples are collected in index
/// order before the pairwise reduction, so the answer does not depend on
/// the worker count. Any failed path aborts the estimate with the count.
pub fn run_paths<F>(n_paths: usize, seed: u64, sample: F) -> crate::Result<McEstimate>
where
    F: Fn(u64) -> crate::Result<C64> + Sync + Send,
{
    use rayon::prelude::*;
    let results: Vec<crate::Result<C64>> =
        (0..n_paths as u64).into_par_iter().map(&sample).collect();
    let mut samples = Vec::with_capacity(n_paths);
    let mut failed = 0;
    let mut first = None;
    for r in results {
        match r {
            Ok(v) => samples.push(v),
            Err(e) => {
                failed += 1;
                if first.is_none() {
                    first = Some(e.to_string());
                }
            }
        }
    }
    if failed > 0 {
        return Err(crate::Error::PathFailures { failed, total: n_paths, first: first.unwrap() });
    }
    Ok(McEstimate::from_samples(&samples, seed))
}
