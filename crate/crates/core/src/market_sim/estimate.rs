use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Sample mean and `sd/sqrt(n)`, summed in index order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        assert!(n > 0, "no samples");
        let mean = samples.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let var = if n > 1 {
            samples
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .collect::<CompensatedSum>()
                .value()
                / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
            seed,
        }
    }

    /// Evaluate `f` on every path index in parallel, keeping index order.
    pub fn par_paths<F>(n: usize, seed: u64, f: F) -> Self
    where
        F: Fn(u64) -> f64 + Sync + Send,
    {
        Self::from_samples(&par_samples(n, f), seed)
    }

    /// `|mean − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

/// Per-path values in path order, computed on the rayon pool.
pub fn par_samples<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// `sqrt(a² + b²)`, the standard error of a sum of independent estimates.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    a.hypot(b)
}
