use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{par_samples, simulate_paths_with, McEstimate, MarketModel, PathBatch, SimError, SimOptions};
use crate::kim_omberg::{KimOmbergModel, KimOmbergParams};
use crate::numerics::{compensated_sum, CompensatedSum};
use crate::utility::{check_standing_assumptions, ProbeGrid, UtilitySpec};

const Y_LO: f64 = 1e-12;
const Y_HI: f64 = 1e12;
const BUDGET_RTOL: f64 = 1e-10;
const WEALTH_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ValueOptions {
    /// Evaluate on paths drawn with `seed + 1` instead of the calibration
    /// sample.
    pub fresh_paths: bool,
    pub sim: SimOptions,
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompleteValue {
    /// Lagrange multiplier solving the budget constraint.
    pub y: f64,
    pub u: McEstimate,
    /// `mean(H·I(yH)) − x` on the calibration sample.
    pub budget_residual: f64,
    /// Calibration and evaluation used the same paths.
    pub sample_reuse: bool,
}

fn require_complete(model: &MarketModel) -> Result<(), SimError> {
    model.validate()?;
    if !model.is_complete() {
        return Err(SimError::Model(format!("{} model is not complete", model.label())));
    }
    Ok(())
}

fn require_positive(what: &str, v: f64) -> Result<(), SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SimError::Argument(format!("{what} = {v} must be finite and > 0")))
    }
}

/// `H_K = Z_K/S⁰_K` on every path; `K = 0` gives ones.
pub fn state_prices(model: &MarketModel, k: f64, paths: usize, seed: u64, sim: &SimOptions) -> Result<Vec<f64>, SimError> {
    if !(k >= 0.0) {
        return Err(SimError::Argument(format!("horizon {k} must be >= 0")));
    }
    if paths == 0 {
        return Err(SimError::Argument("path count must be at least 1".into()));
    }
    if k == 0.0 {
        return Ok(vec![1.0; paths]);
    }
    let batch = simulate_paths_with(model, &[0.0, k], paths, seed, sim)?;
    Ok(batch.log_state_price(1).into_iter().map(f64::exp).collect())
}

fn mean_of<F: Fn(f64) -> f64 + Sync + Send>(h: &[f64], f: F) -> f64 {
    let terms: Vec<f64> = h.par_iter().map(|&v| f(v)).collect();
    compensated_sum(terms) / h.len() as f64
}

/// Solve `mean(H·I(yH)) = x` for `y` by bisection in `log y`.
pub fn calibrate_multiplier(u: &UtilitySpec, h: &[f64], x: f64) -> Result<(f64, f64), SimError> {
    let budget = |y: f64| mean_of(h, |v| v * u.inverse_marginal_unchecked(y * v));
    let (b_lo, b_hi) = (budget(Y_LO), budget(Y_HI));
    if !(b_lo >= x && b_hi <= x) {
        return Err(SimError::Calibration {
            x,
            budget_at_lo: b_lo,
            budget_at_hi: b_hi,
        });
    }
    let (mut lo, mut hi) = (Y_LO.ln(), Y_HI.ln());
    let mut y = (0.5 * (lo + hi)).exp();
    let mut resid = budget(y) - x;
    for _ in 0..400 {
        if resid.abs() <= BUDGET_RTOL * x {
            break;
        }
        if resid > 0.0 {
            lo = y.ln();
        } else {
            hi = y.ln();
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        y = mid.exp();
        resid = budget(y) - x;
    }
    Ok((y, resid))
}

/// Martingale-method value `E[U(I(y·H_K))]` in a complete model, with `y`
/// fitted to the budget on the simulated sample.
pub fn complete_market_value(
    model: &MarketModel,
    u: &UtilitySpec,
    x: f64,
    k: f64,
    paths: usize,
    seed: u64,
) -> Result<CompleteValue, SimError> {
    complete_market_value_with(model, u, x, k, paths, seed, &ValueOptions::default())
}

pub fn complete_market_value_with(
    model: &MarketModel,
    u: &UtilitySpec,
    x: f64,
    k: f64,
    paths: usize,
    seed: u64,
    opts: &ValueOptions,
) -> Result<CompleteValue, SimError> {
    require_complete(model)?;
    require_positive("x", x)?;
    check_standing_assumptions(u, &ProbeGrid::default())?;
    let h = state_prices(model, k, paths, seed, &opts.sim)?;
    let fresh = if opts.fresh_paths {
        Some(state_prices(model, k, paths, seed.wrapping_add(1), &opts.sim)?)
    } else {
        None
    };
    value_from_state_prices(u, x, &h, fresh.as_deref(), seed)
}

fn value_from_state_prices(
    u: &UtilitySpec,
    x: f64,
    h: &[f64],
    fresh: Option<&[f64]>,
    seed: u64,
) -> Result<CompleteValue, SimError> {
    let (y, budget_residual) = calibrate_multiplier(u, h, x)?;
    let (eval, eval_seed) = match fresh {
        Some(f) => (f, seed.wrapping_add(1)),
        None => (h, seed),
    };
    let samples: Vec<f64> = eval
        .par_iter()
        .map(|&v| u.value_unchecked(u.inverse_marginal_unchecked(y * v)))
        .collect();
    Ok(CompleteValue {
        y,
        u: McEstimate::from_samples(&samples, eval_seed),
        budget_residual,
        sample_reuse: fresh.is_none(),
    })
}

/// [`complete_market_value`] at every horizon of `k_grid`, all read off one
/// simulated batch so that neighbouring horizons share their noise.
pub fn complete_value_curve(
    model: &MarketModel,
    u: &UtilitySpec,
    x: f64,
    k_grid: &[f64],
    paths: usize,
    seed: u64,
    opts: &ValueOptions,
) -> Result<Vec<(f64, CompleteValue)>, SimError> {
    require_complete(model)?;
    require_positive("x", x)?;
    check_standing_assumptions(u, &ProbeGrid::default())?;
    if paths == 0 {
        return Err(SimError::Argument("path count must be at least 1".into()));
    }
    if k_grid.is_empty() || !(k_grid[0] >= 0.0) || !k_grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(SimError::Argument("K grid must be non-empty, >= 0 and strictly increasing".into()));
    }
    let mut grid = vec![0.0];
    grid.extend(k_grid.iter().copied().filter(|&k| k > 0.0));
    let simulate = |s: u64| -> Result<Option<PathBatch>, SimError> {
        if grid.len() > 1 {
            simulate_paths_with(model, &grid, paths, s, &opts.sim).map(Some)
        } else {
            Ok(None)
        }
    };
    let batch = simulate(seed)?;
    let fresh = if opts.fresh_paths { simulate(seed.wrapping_add(1))? } else { None };
    let prices = |b: &Option<PathBatch>, k: f64| -> Vec<f64> {
        match b.as_ref().and_then(|b| b.node(k).filter(|_| k > 0.0).map(|j| (b, j))) {
            Some((b, j)) => b.log_state_price(j).into_iter().map(f64::exp).collect(),
            None => vec![1.0; paths],
        }
    };
    k_grid
        .iter()
        .map(|&k| {
            let h = prices(&batch, k);
            let f = opts.fresh_paths.then(|| prices(&fresh, k));
            Ok((k, value_from_state_prices(u, x, &h, f.as_deref(), seed)?))
        })
        .collect()
}

/// Dual objective at `ν = 0`, `E[V(y·H_K)]`; the dual value in a complete
/// model.
pub fn dual_value_complete(
    model: &MarketModel,
    u: &UtilitySpec,
    y: f64,
    k: f64,
    paths: usize,
    seed: u64,
) -> Result<McEstimate, SimError> {
    dual_value_complete_with(model, u, y, k, paths, seed, &SimOptions::default())
}

pub fn dual_value_complete_with(
    model: &MarketModel,
    u: &UtilitySpec,
    y: f64,
    k: f64,
    paths: usize,
    seed: u64,
    sim: &SimOptions,
) -> Result<McEstimate, SimError> {
    require_complete(model)?;
    require_positive("y", y)?;
    let h = state_prices(model, k, paths, seed, sim)?;
    let samples = h
        .par_iter()
        .map(|&v| u.conjugate(y * v))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// [`dual_value_complete`] at every multiplier in `ys`, all on one sample.
pub fn dual_curve_complete(
    model: &MarketModel,
    u: &UtilitySpec,
    ys: &[f64],
    k: f64,
    paths: usize,
    seed: u64,
    sim: &SimOptions,
) -> Result<Vec<McEstimate>, SimError> {
    require_complete(model)?;
    for &y in ys {
        require_positive("y", y)?;
    }
    let h = state_prices(model, k, paths, seed, sim)?;
    ys.iter()
        .map(|&y| {
            let samples = h.par_iter().map(|&v| u.conjugate(y * v)).collect::<Result<Vec<f64>, _>>()?;
            Ok(McEstimate::from_samples(&samples, seed))
        })
        .collect()
}

/// Closed-form value for constant `r` and `λ`:
/// `u = (x^p/p)·E[H_K^{p/(p−1)}]^{1−p}` with
/// `E[H_K^q] = exp(−q·r·K + (q² − q)·λ²·K/2)`; `p = 0` is the log investor,
/// `u = ln x + (r + λ²/2)·K`.
pub fn merton_value_oracle(r: f64, lambda: f64, p: f64, x: f64, k: f64) -> Result<f64, SimError> {
    require_positive("x", x)?;
    if !(k >= 0.0) || !(p < 1.0) || !r.is_finite() || !lambda.is_finite() {
        return Err(SimError::Argument(format!(
            "need K >= 0, p < 1 and finite r, lambda (K = {k}, p = {p})"
        )));
    }
    let l2 = lambda * lambda;
    if p == 0.0 {
        return Ok(x.ln() + (r + 0.5 * l2) * k);
    }
    let q = p / (p - 1.0);
    let log_moment = -q * r * k + 0.5 * (q * q - q) * l2 * k;
    Ok((p * x.ln() + (1.0 - p) * log_moment).exp() / p)
}

/// `π* = λ/(σ(1 − p))`.
pub fn merton_fraction(lambda: f64, sigma: f64, p: f64) -> f64 {
    lambda / (sigma * (1.0 - p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub k: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrematureCurve {
    pub y: f64,
    pub horizon: f64,
    pub rows: Vec<CurveRow>,
}

/// Expected utility of the `T`-horizon optimal wealth observed at each `K`
/// in the OU-drift model with a positive power investor.
pub fn premature_curve_ko(
    params: &KimOmbergParams,
    x: f64,
    horizon: f64,
    k_grid: &[f64],
    paths: usize,
    seed: u64,
) -> Result<PrematureCurve, SimError> {
    premature_curve_ko_with(params, x, horizon, k_grid, paths, seed, &SimOptions::default())
}

pub fn premature_curve_ko_with(
    params: &KimOmbergParams,
    x: f64,
    horizon: f64,
    k_grid: &[f64],
    paths: usize,
    seed: u64,
    sim: &SimOptions,
) -> Result<PrematureCurve, SimError> {
    require_positive("x", x)?;
    require_positive("T", horizon)?;
    if k_grid.is_empty() || !k_grid.iter().all(|&k| (0.0..=horizon).contains(&k)) || !k_grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(SimError::Argument("K grid must be strictly increasing inside [0, T]".into()));
    }
    let model = KimOmbergModel::solve(*params, horizon, 1e-9)?;
    if model.riccati.explosion.is_some() {
        return Err(SimError::Regime(format!(
            "T = {horizon} is not below the explosion time {:?}",
            model.explosion_time()
        )));
    }
    let y = model.multiplier(x, horizon)?;
    let p = params.p;
    let inv = 1.0 / (p - 1.0);
    let mut grid: Vec<f64> = Vec::with_capacity(k_grid.len() + 1);
    if k_grid[0] != 0.0 {
        grid.push(0.0);
    }
    grid.extend_from_slice(k_grid);
    let batch = if grid.len() > 1 {
        Some(simulate_paths_with(&MarketModel::KimOmberg(*params), &grid, paths, seed, sim)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        if k == 0.0 {
            rows.push(CurveRow {
                k,
                estimate: x.powf(p) / p,
                stderr: 0.0,
            });
            continue;
        }
        let batch = batch.as_ref().expect("grid has a positive node");
        let j = batch.node(k).expect("K is a grid node");
        let r = model.riccati.eval(horizon - k).ok_or(SimError::Regime("Riccati solution unavailable".into()))?;
        let samples = par_samples(paths, |i| {
            let i = i as usize;
            let (lz, mu) = (batch.log_z(i)[j], batch.state(i)[j]);
            let log_x = inv * (y.ln() + lz) + r.a + r.b * mu + 0.5 * r.c * mu * mu;
            (p * log_x).exp() / p
        });
        let e = McEstimate::from_samples(&samples, seed);
        rows.push(CurveRow {
            k,
            estimate: e.mean,
            stderr: e.stderr,
        });
    }
    Ok(PrematureCurve { y, horizon, rows })
}

/// Fraction of wealth held in the stock.
#[derive(Clone)]
pub enum Strategy {
    Constant(f64),
    /// `π(t, state)`.
    Feedback(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Constant(pi) => f.debug_tuple("Constant").field(pi).finish(),
            Strategy::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

impl Strategy {
    fn at(&self, t: f64, state: f64) -> f64 {
        match self {
            Strategy::Constant(pi) => *pi,
            Strategy::Feedback(f) => f(t, state),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WealthOutcome {
    /// `X_K` per path, floored at `1e-300`.
    pub terminal: Vec<f64>,
    /// Paths that hit the floor.
    pub floored: usize,
}

impl WealthOutcome {
    pub fn expected_utility(&self, u: &UtilitySpec, seed: u64) -> McEstimate {
        let samples: Vec<f64> = self.terminal.par_iter().map(|&x| u.value_unchecked(x)).collect();
        McEstimate::from_samples(&samples, seed)
    }
}

/// Self-financing wealth on the batch grid, updated in logs with the
/// strategy and coefficients frozen at each left node.
pub fn wealth_path(batch: &PathBatch, strategy: &Strategy, x: f64) -> Result<WealthOutcome, SimError> {
    require_positive("x", x)?;
    if batch.brownian(0).is_none() {
        return Err(SimError::Argument("wealth dynamics need a batch with the Brownian path recorded".into()));
    }
    let model = batch.model;
    let sigma = model.sigma();
    let grid = &batch.time_grid;
    let terminal: Vec<(f64, bool)> = (0..batch.n_paths)
        .into_par_iter()
        .map(|i| {
            let (state, b, ls0) = (batch.state(i), batch.brownian(i).unwrap(), batch.log_s0(i));
            let mut log_x = CompensatedSum::new();
            log_x.add(x.ln());
            for j in 0..grid.len() - 1 {
                let dt = grid[j + 1] - grid[j];
                let pi = strategy.at(grid[j], state[j]);
                let lam = model.lambda(state[j]);
                let vol = pi * sigma;
                log_x.add(ls0[j + 1] - ls0[j]);
                log_x.add((vol * lam - 0.5 * vol * vol) * dt + vol * (b[j + 1] - b[j]));
            }
            let w = log_x.value().exp();
            if !(w >= WEALTH_FLOOR) {
                (WEALTH_FLOOR, true)
            } else {
                (w, false)
            }
        })
        .collect();
    let floored = terminal.iter().filter(|t| t.1).count();
    Ok(WealthOutcome {
        terminal: terminal.into_iter().map(|t| t.0).collect(),
        floored,
    })
}
