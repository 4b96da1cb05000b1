//! Monte Carlo checks of the sufficient conditions under which following the
//! long-horizon optimizer and stopping early still converges to the
//! long-horizon value.
//!
//! Verdicts are numerical evidence, never proofs: continuity of an
//! expectation in time is proxied by the absence of large jumps between
//! neighbouring grid points, and finiteness by stable, well-resolved
//! estimates.

use serde::Serialize;
use thiserror::Error;

use crate::market_sim::{simulate_paths_with, MarketModel, SimError, SimOptions};
use crate::numerics::{compensated_sum, log_space};
use crate::utility::{ProbeGrid, UtilitySpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error("{0}")]
    Domain(String),
    #[error("market price of risk is singular: C0 > 0 with C1 + v = 0")]
    Singular,
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, ConditionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `t ↦ E[exp(δ(r_t + λ_t²))]` finite and continuous near the horizon.
    NovikovExponential,
    /// `sup_t E[exp(−γ∫_t^T r)·(Z_T/Z_t)^γ] < ∞` near the horizon.
    DensityPowerMoment,
    /// `U'(a)/a^(p−1)` bounded away from 0 and ∞ as `a ↓ 0`.
    MarginalPowerBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionVerdict {
    HoldsNumerically,
    FailsNumerically,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridValue {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Share of paths whose exponent overflows `f64`.
    pub overflow_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ConditionParams {
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub grid: Vec<f64>,
    pub values: Vec<GridValue>,
    pub verdict: ConditionVerdict,
    pub params: ConditionParams,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    /// Relative change between neighbouring grid values treated as a jump.
    pub jump_threshold: f64,
    /// Largest tolerated share of overflowing paths.
    pub overflow_tolerance: f64,
    /// `stderr/mean` above this is unresolved.
    pub max_rel_stderr: f64,
    pub sim: SimOptions,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            jump_threshold: 0.5,
            overflow_tolerance: 1e-3,
            max_rel_stderr: 0.1,
            sim: SimOptions::default(),
        }
    }
}

/// `λ = C0/sqrt(C1 + v) + C2·sqrt(C3 + v)`.
pub fn feller_lambda(c: [f64; 4], require_c1_positive: bool, v: f64) -> Result<f64> {
    if let Some(i) = c.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
        return Err(ConditionError::Domain(format!("C{i} = {} must be finite and >= 0", c[i])));
    }
    if !(v >= 0.0) {
        return Err(ConditionError::Domain(format!("v = {v} must be >= 0")));
    }
    let [c0, c1, c2, c3] = c;
    if require_c1_positive && c0 > 0.0 && c1 == 0.0 {
        return Err(ConditionError::Domain("C0 > 0 requires C1 > 0".into()));
    }
    if c0 > 0.0 && c1 + v == 0.0 {
        return Err(ConditionError::Singular);
    }
    let first = if c0 == 0.0 { 0.0 } else { c0 / (c1 + v).sqrt() };
    Ok(first + c2 * (c3 + v).sqrt())
}

/// `p(1 − p)`, the level the exponent `γ` must stay below.
pub fn gamma_threshold(p: f64) -> Result<f64> {
    if !(p < 0.0) || !p.is_finite() {
        return Err(ConditionError::Domain(format!("p = {p} must be finite and < 0")));
    }
    Ok(p * (1.0 - p))
}

/// `E[exp(e)]` with its standard error from per-path exponents, computed
/// relative to the largest exponent so that large values do not overflow
/// before the final scaling.
fn exp_moment(t: f64, exponents: &[f64]) -> GridValue {
    let n = exponents.len() as f64;
    let limit = f64::MAX.ln();
    let overflow = exponents.iter().filter(|e| !(**e < limit)).count() as f64 / n;
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return GridValue {
            t,
            mean: if m.is_nan() { f64::NAN } else { m.exp() },
            stderr: f64::NAN,
            overflow_fraction: overflow,
        };
    }
    let w: Vec<f64> = exponents.iter().map(|e| (e - m).exp()).collect();
    let mean_w = compensated_sum(w.iter().copied()) / n;
    let var_w = if n > 1.0 {
        compensated_sum(w.iter().map(|x| (x - mean_w) * (x - mean_w))) / (n - 1.0)
    } else {
        0.0
    };
    let scale = m.exp();
    GridValue {
        t,
        mean: scale * mean_w,
        stderr: scale * (var_w / n).sqrt(),
        overflow_fraction: overflow,
    }
}

fn judge(values: &[GridValue], opts: &CheckOptions, diagnostics: &mut Vec<String>) -> ConditionVerdict {
    let mut verdict = ConditionVerdict::HoldsNumerically;
    for v in values {
        if v.overflow_fraction > opts.overflow_tolerance {
            diagnostics.push(format!(
                "t={}: exponent overflow on {:.3}% of paths",
                v.t,
                100.0 * v.overflow_fraction
            ));
            verdict = ConditionVerdict::Inconclusive;
        } else if !v.mean.is_finite() || !v.stderr.is_finite() {
            diagnostics.push(format!("t={}: non-finite estimate {}", v.t, v.mean));
            verdict = ConditionVerdict::Inconclusive;
        } else if v.overflow_fraction > 0.0 {
            diagnostics.push(format!("t={}: some paths overflowed", v.t));
            verdict = ConditionVerdict::Inconclusive;
        }
    }
    if verdict != ConditionVerdict::HoldsNumerically {
        return verdict;
    }
    for w in values.windows(2) {
        let (a, b) = (w[0].mean, w[1].mean);
        if (b - a).abs() > opts.jump_threshold * a.abs().min(b.abs()) {
            diagnostics.push(format!("jump from {a} at t={} to {b} at t={}", w[0].t, w[1].t));
            return ConditionVerdict::FailsNumerically;
        }
    }
    for v in values {
        if v.stderr > opts.max_rel_stderr * v.mean.abs() {
            diagnostics.push(format!("t={}: stderr/mean = {:.3}", v.t, v.stderr / v.mean.abs()));
            verdict = ConditionVerdict::Inconclusive;
        }
    }
    verdict
}

fn check_grid(grid: &[f64], lo: f64, hi: f64) -> Result<()> {
    if grid.is_empty() || !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(ConditionError::Domain("grid must be non-empty and strictly increasing".into()));
    }
    if !(grid[0] >= lo && grid[grid.len() - 1] <= hi) {
        return Err(ConditionError::Domain(format!("grid must lie in [{lo}, {hi}]")));
    }
    Ok(())
}

/// Simulation grid: zero followed by the positive evaluation times.
fn sim_grid(times: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(times.iter().copied().filter(|&t| t > 0.0));
    g
}

/// Monte Carlo curve `t ↦ E[exp(δ(r_t + λ_t²))]`.
pub fn novikov_curve(model: &MarketModel, delta: f64, grid: &[f64], paths: usize, seed: u64) -> Result<ConditionReport> {
    novikov_curve_with(model, delta, grid, paths, seed, &CheckOptions::default())
}

pub fn novikov_curve_with(
    model: &MarketModel,
    delta: f64,
    grid: &[f64],
    paths: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ConditionError::Domain(format!("delta = {delta} must be finite and > 0")));
    }
    check_grid(grid, 0.0, f64::INFINITY)?;
    let r = model.rate();
    let exponent = |state: f64| {
        let l = model.lambda(state);
        delta * (r + l * l)
    };
    let times = sim_grid(grid);
    let batch = if times.len() > 1 {
        Some(simulate_paths_with(model, &times, paths, seed, &opts.sim)?)
    } else {
        None
    };
    let values: Vec<GridValue> = grid
        .iter()
        .map(|&t| match batch.as_ref().and_then(|b| b.node(t).filter(|_| t > 0.0).map(|j| (b, j))) {
            Some((b, j)) => {
                let e: Vec<f64> = (0..b.n_paths).map(|i| exponent(b.state(i)[j])).collect();
                exp_moment(t, &e)
            }
            None => exp_moment(t, &[exponent(model.initial_state())]),
        })
        .collect();
    let mut diagnostics = Vec::new();
    let verdict = judge(&values, opts, &mut diagnostics);
    Ok(ConditionReport {
        condition: Condition::NovikovExponential,
        grid: grid.to_vec(),
        values,
        verdict,
        params: ConditionParams {
            delta: Some(delta),
            ..Default::default()
        },
        diagnostics,
    })
}

/// Monte Carlo estimates of `E[exp(−γ∫_t^T r du)·(Z_T/Z_t)^γ]` on a grid
/// in `[T − ε, T]`. The verdict also requires the supremum to be stable
/// when the path count is doubled.
#[allow(clippy::too_many_arguments)]
pub fn cond_main_estimate(
    model: &MarketModel,
    gamma: f64,
    epsilon: f64,
    horizon: f64,
    grid: &[f64],
    paths: usize,
    seed: u64,
) -> Result<ConditionReport> {
    cond_main_estimate_with(model, gamma, epsilon, horizon, grid, paths, seed, &CheckOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn cond_main_estimate_with(
    model: &MarketModel,
    gamma: f64,
    epsilon: f64,
    horizon: f64,
    grid: &[f64],
    paths: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<ConditionReport> {
    if !(gamma < 0.0 && gamma.is_finite()) {
        return Err(ConditionError::Domain(format!("gamma = {gamma} must be finite and < 0")));
    }
    if !(epsilon > 0.0) || !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ConditionError::Domain("epsilon and T must be > 0".into()));
    }
    if paths == 0 {
        return Err(ConditionError::Domain("path count must be at least 1".into()));
    }
    check_grid(grid, (horizon - epsilon).max(0.0), horizon)?;
    let mut times = sim_grid(grid);
    if *times.last().unwrap() != horizon {
        times.push(horizon);
    }
    // Paths are keyed by index: the first half of the doubled batch is the
    // requested sample.
    let batch = simulate_paths_with(model, &times, 2 * paths, seed, &opts.sim)?;
    let end = times.len() - 1;
    let exponents = |t: f64, n: usize| -> Vec<f64> {
        let j = batch.node(t).unwrap_or(0);
        (0..n)
            .map(|i| {
                let (lz, ls) = (batch.log_z(i), batch.log_s0(i));
                -gamma * (ls[end] - ls[j]) + gamma * (lz[end] - lz[j])
            })
            .collect()
    };
    let values: Vec<GridValue> = grid.iter().map(|&t| exp_moment(t, &exponents(t, paths))).collect();
    let doubled: Vec<GridValue> = grid.iter().map(|&t| exp_moment(t, &exponents(t, 2 * paths))).collect();
    let mut diagnostics = Vec::new();
    let mut verdict = judge(&values, opts, &mut diagnostics);
    let sup = |v: &[GridValue]| *v.iter().max_by(|a, b| a.mean.total_cmp(&b.mean)).unwrap();
    let (s1, s2) = (sup(&values), sup(&doubled));
    if verdict == ConditionVerdict::HoldsNumerically {
        let band = 3.0 * s1.stderr.hypot(s2.stderr);
        if (s1.mean - s2.mean).abs() > band {
            diagnostics.push(format!(
                "supremum moved from {} to {} when doubling paths (band {band})",
                s1.mean, s2.mean
            ));
            verdict = ConditionVerdict::Inconclusive;
        }
    }
    Ok(ConditionReport {
        condition: Condition::DensityPowerMoment,
        grid: grid.to_vec(),
        values,
        verdict,
        params: ConditionParams {
            gamma: Some(gamma),
            epsilon: Some(epsilon),
            ..Default::default()
        },
        diagnostics,
    })
}

/// `U'(a)/a^(p−1)` over the lowest decade of the probe grid. Holds when the
/// ratio stays positive and finite and neither vanishes nor explodes across
/// the decade (end-to-end change below a factor of two).
pub fn marginal_power_bounds(u: &UtilitySpec, p: f64, probe: &ProbeGrid) -> Result<ConditionReport> {
    if !(p < 0.0) {
        return Err(ConditionError::Domain(format!("p = {p} must be < 0")));
    }
    probe.validate().map_err(|e| ConditionError::Domain(e.to_string()))?;
    let grid = log_space(probe.lo, probe.lo * 10.0, 11);
    let values: Vec<GridValue> = grid
        .iter()
        .map(|&a| GridValue {
            t: a,
            mean: u.marginal(a).map_or(f64::NAN, |m| m / a.powf(p - 1.0)),
            stderr: 0.0,
            overflow_fraction: 0.0,
        })
        .collect();
    let mut diagnostics = Vec::new();
    let finite = values.iter().all(|v| v.mean.is_finite() && v.mean > 0.0);
    let verdict = if !finite {
        diagnostics.push("ratio is zero or non-finite on the probe".into());
        ConditionVerdict::Inconclusive
    } else {
        let change = values[0].mean / values[values.len() - 1].mean;
        if !(0.5..=2.0).contains(&change) {
            diagnostics.push(format!("ratio changes by a factor {change} over the lowest decade"));
            ConditionVerdict::FailsNumerically
        } else {
            ConditionVerdict::HoldsNumerically
        }
    };
    Ok(ConditionReport {
        condition: Condition::MarginalPowerBounds,
        grid,
        values,
        verdict,
        params: ConditionParams {
            p: Some(p),
            ..Default::default()
        },
        diagnostics,
    })
}
