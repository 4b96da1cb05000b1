//! An exact complete market in which stopping early is catastrophic.
//!
//! Brownian increments over a grid `t_1 < t_2 < … → 1` split the sample space
//! into events `A_k` (the first negative increment is the `k`-th one) with
//! `P(A_k) = 2^-k`. On `A_k` the terminal density equals a two-point variable
//! `Y_k ∈ {a_k, b_k}` with unit mean, decided by the next increment. For a
//! utility with `U(0) = -inf` and `liminf a·U'(a) = 0` the levels can be
//! chosen so that the optimal wealth observed at `t_n` has expected utility
//! diverging to `-inf`, while expected utility at the horizon stays finite.
//!
//! All values here are exact series, truncated at `n_max` with explicit
//! bounds on the remainder.

use serde::Serialize;
use thiserror::Error;

use crate::market_sim::{McEstimate, PathStream};
use crate::numerics::{compensated_sum, norm_quantile_upper};
use crate::utility::{classify_exit_safety, ExitVerdict, ProbeGrid, UtilityError, UtilitySpec};

const MAX_HALVINGS: usize = 2000;
const MAX_DOUBLINGS: usize = 2000;
const BEYOND_LEVELS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error("utility classified as {0:?}; the construction needs an at-risk utility")]
    Classification(ExitVerdict),
    #[error("level {level}: {what}")]
    Construction { level: usize, what: String },
    #[error("level {n} outside 1..={n_max}")]
    Index { n: usize, n_max: usize },
    #[error("{0}")]
    Argument(String),
    #[error("initial wealth series is not finite ({0})")]
    Divergent(f64),
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

pub type Result<T> = std::result::Result<T, CounterexampleError>;

/// Observation times `t_1 < t_2 < …` in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGrid {
    /// `t_k = 1 − 2^-k`.
    Dyadic,
    Explicit(Vec<f64>),
}

impl TimeGrid {
    /// The first `n` times.
    pub fn times(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            TimeGrid::Dyadic => Ok((1..=n).map(|k| 1.0 - 0.5f64.powi(k as i32)).collect()),
            TimeGrid::Explicit(t) => {
                if t.len() < n {
                    return Err(CounterexampleError::Argument(format!(
                        "time grid has {} points, need {n}",
                        t.len()
                    )));
                }
                let t = &t[..n];
                if !t.iter().all(|&s| s > 0.0 && s < 1.0) || !t.windows(2).all(|w| w[1] > w[0]) {
                    return Err(CounterexampleError::Argument(
                        "time grid must be strictly increasing inside (0, 1)".into(),
                    ));
                }
                Ok(t.to_vec())
            }
        }
    }
}

/// One level of the construction. `p` is `P(Y_k = a)`; `q = 1 − p` is kept
/// separately because it is tiny for deep levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub k: usize,
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub x: f64,
}

impl Level {
    /// `p_k = (b − 1)/(b − a)`, `q_k = (1 − a)/(b − a)`.
    pub fn probabilities(a: f64, b: f64) -> (f64, f64) {
        ((b - 1.0) / (b - a), (1.0 - a) / (b - a))
    }

    /// `E[Y_k]`, one up to rounding.
    pub fn mean(&self) -> f64 {
        self.a * self.p + self.b * self.q
    }
}

/// A point value with rigorous lower and upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bounds {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Upper bound on `E[Y_k I(Y_k)]` for all levels beyond the truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DensityTail {
    sup: f64,
    /// The bound is attained by every level (log utility).
    exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleInstance {
    /// `t_1, …, t_{n_max+1}`; the last time closes the final level.
    pub t_grid: Vec<f64>,
    pub levels: Vec<Level>,
    pub n_max: usize,
    /// The utility the levels were built for.
    #[serde(skip)]
    pub utility: UtilitySpec,
    /// The utility used to value the market. Equal to `utility` unless
    /// replaced with [`CounterexampleInstance::with_utility`].
    #[serde(skip)]
    pub evaluation: UtilitySpec,
    /// Initial wealth with multiplier one under `evaluation`.
    pub x0: f64,
    pub x0_bounds: Bounds,
    /// `x_k` for levels past `n_max`, used to bound the truncated series.
    #[serde(skip)]
    beyond: Vec<f64>,
}

/// `x_k = U^-1(−k·2^k)`, so that `U(x_k)·2^-k = −k`.
fn level_wealth(u: &UtilitySpec, k: usize) -> Result<f64> {
    Ok(u.value_inverse(-(k as f64) * 2f64.powi(k as i32))?)
}

/// `a < a_prev` with `a·I(a) < target`, within a relative `1e-13` of the
/// boundary when the boundary is bracketed.
fn choose_a(u: &UtilitySpec, a_prev: f64, target: f64) -> std::result::Result<f64, String> {
    let ok = |a: f64| a * u.inverse_marginal_unchecked(a) < target;
    let mut bad = a_prev;
    let mut good = 0.5 * a_prev;
    for _ in 0..MAX_HALVINGS {
        if good == 0.0 {
            break;
        }
        if ok(good) {
            return Ok(if ok(bad) { good } else { refine(ok, good, bad) });
        }
        bad = good;
        good *= 0.5;
    }
    Err(format!("no a with a*I(a) < {target:e}"))
}

/// `b > b_prev`, at least 2, with `I(b) < target`, within a relative `1e-13`
/// of the boundary when the boundary is bracketed.
fn choose_b(u: &UtilitySpec, b_prev: f64, target: f64) -> std::result::Result<f64, String> {
    let ok = |b: f64| u.inverse_marginal_unchecked(b) < target;
    let floor = b_prev.max(2.0);
    let mut bad = floor;
    let mut good = (2.0 * b_prev).max(2.0);
    for _ in 0..MAX_DOUBLINGS {
        if !good.is_finite() {
            break;
        }
        if ok(good) {
            return Ok(if good == bad || ok(bad) { good } else { refine(ok, good, bad) });
        }
        bad = good;
        good *= 2.0;
    }
    Err(format!("no b with I(b) < {target:e}"))
}

/// Geometric bisection between a point satisfying `ok` and one that does not.
fn refine<F: Fn(f64) -> bool>(ok: F, mut good: f64, mut bad: f64) -> f64 {
    for _ in 0..200 {
        let mid = (good * bad).sqrt();
        if (good / bad - 1.0).abs() < 1e-13 || mid == good || mid == bad {
            break;
        }
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

/// Build the levels for an at-risk utility.
pub fn build_instance(u: &UtilitySpec, n_max: usize, grid: &TimeGrid) -> Result<CounterexampleInstance> {
    if n_max == 0 {
        return Err(CounterexampleError::Argument("n_max must be at least 1".into()));
    }
    let verdict = classify_exit_safety(u, &ProbeGrid::default())?.verdict;
    if verdict != ExitVerdict::AtRisk {
        return Err(CounterexampleError::Classification(verdict));
    }
    let t_grid = grid.times(n_max + 1)?;
    let mut levels = Vec::with_capacity(n_max);
    let (mut a_prev, mut b_prev) = (1.0f64, 1.0f64);
    for k in 1..=n_max {
        let fail = |what: String| CounterexampleError::Construction { level: k, what };
        let x = level_wealth(u, k)?;
        if !(x > 0.0) {
            return Err(fail(format!("U^-1(-k*2^k) = {x:e} is not positive")));
        }

        // Both inequalities are met with margin two, a·I(a) ≈ x/4 and
        // I(b) ≈ x/4, so E[Y_k I(Y_k)] ≈ x_k/2 at every level.
        let target = 0.25 * x;
        let a = choose_a(u, a_prev, target).map_err(fail)?;
        let b = choose_b(u, b_prev, target).map_err(fail)?;
        let (p, q) = Level::probabilities(a, b);
        let dt = t_grid[k] - t_grid[k - 1];
        levels.push(Level {
            k,
            t: t_grid[k - 1],
            a,
            b,
            p,
            q,
            alpha: dt.sqrt() * norm_quantile_upper(q),
            x,
        });
        a_prev = a;
        b_prev = b;
    }
    let beyond = (n_max + 1..=n_max + BEYOND_LEVELS)
        .map_while(|k| level_wealth(u, k).ok().filter(|x| *x > 0.0))
        .collect();
    let mut inst = CounterexampleInstance {
        beyond,
        t_grid,
        levels,
        n_max,
        utility: u.clone(),
        evaluation: u.clone(),
        x0: f64::NAN,
        x0_bounds: Bounds {
            estimate: f64::NAN,
            lo: f64::NAN,
            hi: f64::NAN,
        },
    };
    inst.x0_bounds = inst.initial_wealth()?;
    inst.x0 = inst.x0_bounds.estimate;
    Ok(inst)
}

fn weight(k: usize) -> f64 {
    0.5f64.powi(k as i32)
}

impl CounterexampleInstance {
    /// Same market, valued with another utility.
    pub fn with_utility(&self, u: UtilitySpec) -> Result<Self> {
        let mut inst = self.clone();
        inst.evaluation = u;
        inst.x0_bounds = inst.initial_wealth()?;
        inst.x0 = inst.x0_bounds.estimate;
        Ok(inst)
    }

    pub fn level(&self, n: usize) -> Result<&Level> {
        if n == 0 || n > self.n_max {
            return Err(CounterexampleError::Index { n, n_max: self.n_max });
        }
        Ok(&self.levels[n - 1])
    }

    /// `E[Y I(Y)] = a·I(a)·p + b·I(b)·q` under the evaluation utility.
    pub fn density_moment(&self, lvl: &Level) -> f64 {
        let u = &self.evaluation;
        lvl.a * u.inverse_marginal_unchecked(lvl.a) * lvl.p + lvl.b * u.inverse_marginal_unchecked(lvl.b) * lvl.q
    }

    /// `E[U(I(Y))] = U(I(a))·p + U(I(b))·q` under the evaluation utility.
    pub fn utility_moment(&self, lvl: &Level) -> f64 {
        let u = &self.evaluation;
        u.value_unchecked(u.inverse_marginal_unchecked(lvl.a)) * lvl.p
            + u.value_unchecked(u.inverse_marginal_unchecked(lvl.b)) * lvl.q
    }

    fn last(&self) -> &Level {
        &self.levels[self.n_max - 1]
    }

    fn density_tail(&self) -> DensityTail {
        let last = self.last();
        if self.evaluation == self.utility {
            // Construction: E[Y_k I(Y_k)] < x_k ≤ x_N beyond N.
            return DensityTail {
                sup: last.x,
                exact: false,
            };
        }
        match self.evaluation {
            UtilitySpec::Log => DensityTail { sup: 1.0, exact: true },
            UtilitySpec::Power { p } if p < 0.0 => {
                // y·I(y) = y^e with e in (0, 1); increasing on the a side,
                // and y^e·q ≤ y^e/(y − 1) decreases on the b side.
                let e = p / (p - 1.0);
                DensityTail {
                    sup: last.a.powf(e) + last.b.powf(e) / (last.b - 1.0),
                    exact: false,
                }
            }
            _ => DensityTail {
                sup: f64::INFINITY,
                exact: false,
            },
        }
    }

    /// Upper bound on `Σ_{k>n_max} E[Y_k I(Y_k)]·2^-(k−n)`, and whether it is
    /// attained.
    fn density_tail_sum(&self, n: usize) -> (f64, bool) {
        if self.evaluation != self.utility {
            let t = self.density_tail();
            return (t.sup * weight(self.n_max - n), t.exact);
        }
        // Every level has E[Y_k I(Y_k)] < x_k/2 and x_k decreases, so the
        // remainder past the listed levels is at most x_K/2·2^-(K−n).
        let first = self.n_max + 1;
        let listed = compensated_sum(
            self.beyond
                .iter()
                .enumerate()
                .map(|(j, x)| 0.5 * x * weight(first + j - n)),
        );
        let (k_last, x_last) = match self.beyond.last() {
            Some(x) => (self.n_max + self.beyond.len(), *x),
            None => (self.n_max, self.last().x),
        };
        (listed + 0.5 * x_last * weight(k_last - n), false)
    }

    /// Lower bound on `E[U(I(Y_k))]` for every level beyond the truncation.
    fn utility_tail_floor(&self, density: DensityTail) -> f64 {
        let u = &self.evaluation;
        let last = self.last();
        // Jensen on the convex conjugate: E[U(I(Y))] = E[V(Y)] + E[Y I(Y)] ≥ V(1) + E[Y I(Y)].
        let moment_floor = if density.exact { density.sup } else { 0.0 };
        let jensen = u.conjugate(1.0).unwrap_or(f64::NEG_INFINITY) + moment_floor;
        // a_k ≤ a_N, b_k ≥ b_N and q_k ≤ 1/(b_k − 1); the tangent of V at b_N
        // bounds the b branch.
        let i_b = u.inverse_marginal_unchecked(last.b);
        let direct = u.value_unchecked(u.inverse_marginal_unchecked(last.a)).min(0.0)
            + u.value_unchecked(i_b).min(0.0) / (last.b - 1.0)
            - i_b * last.b / (last.b - 1.0);
        jensen.max(direct)
    }

    /// `x0 = E[ξ_1 I(ξ_1)] = Σ E[Y_k I(Y_k)]·2^-k`.
    pub fn initial_wealth(&self) -> Result<Bounds> {
        let body = compensated_sum(self.levels.iter().map(|l| self.density_moment(l) * weight(l.k)));
        if !body.is_finite() {
            return Err(CounterexampleError::Divergent(body));
        }
        let (tail, exact) = self.density_tail_sum(0);
        let hi = body + tail;
        Ok(Bounds {
            estimate: if exact { hi } else if tail.is_finite() { body + 0.5 * tail } else { body },
            lo: if exact { hi } else { body },
            hi,
        })
    }

    /// `Σ_{k>n} E[Y_k I(Y_k)]·2^-(k−n)`: the wealth held on `C_n` at `t_n`.
    fn continuation_wealth(&self, n: usize) -> Bounds {
        let body = compensated_sum(
            self.levels[n..]
                .iter()
                .map(|l| self.density_moment(l) * weight(l.k - n)),
        );
        let (tail, exact) = self.density_tail_sum(n);
        let hi = body + tail;
        if exact {
            return Bounds {
                estimate: hi,
                lo: hi,
                hi,
            };
        }
        Bounds {
            estimate: if hi.is_finite() { 0.5 * (body + hi) } else { body },
            lo: body,
            hi,
        }
    }

    /// Expected utility of the horizon-one optimal wealth observed at `t_n`:
    ///
    /// ```text
    /// Σ_{k<n} E[U(I(Y_k))]·2^-k + U(E[Y_n I(Y_n)])·2^-n + U(Σ_{k>n} E[Y_k I(Y_k)]·2^-(k−n))·2^-n
    /// ```
    pub fn premature_value(&self, n: usize) -> Result<Bounds> {
        let lvl = *self.level(n)?;
        let u = &self.evaluation;
        let past = compensated_sum(
            self.levels[..n - 1]
                .iter()
                .map(|l| self.utility_moment(l) * weight(l.k)),
        );
        let stopped = u.value_unchecked(self.density_moment(&lvl)) * weight(n);
        let w = self.continuation_wealth(n);
        let cont = |x: f64| {
            if x > 0.0 {
                u.value_unchecked(x) * weight(n)
            } else {
                f64::NEG_INFINITY
            }
        };
        let base = past + stopped;
        Ok(Bounds {
            estimate: base + cont(w.estimate),
            lo: base + cont(w.lo),
            hi: base + cont(w.hi),
        })
    }

    /// Expected utility of the optimal wealth at the horizon,
    /// `Σ E[U(I(Y_k))]·2^-k`.
    pub fn terminal_value(&self) -> Bounds {
        let body = compensated_sum(self.levels.iter().map(|l| self.utility_moment(l) * weight(l.k)));
        let rest = weight(self.n_max);
        let floor = self.utility_tail_floor(self.density_tail()) * rest;
        let ceiling = self.evaluation.upper_bound() * rest;
        let lo = body + floor;
        let hi = body + ceiling;
        Bounds {
            estimate: if hi.is_finite() { 0.5 * (lo + hi) } else { lo },
            lo,
            hi,
        }
    }

    /// Draw the first `n` Brownian increments of one path. Returns the event
    /// index `j` (`A_j` for `j ≤ n`, `n + 1` for `C_n`) and whether `Y_j`
    /// takes its upper value.
    fn sample_event(&self, stream: &mut PathStream, n: usize) -> (usize, bool) {
        for j in 1..=n {
            let [z] = stream.step_normals::<1>(j as u64 - 1);
            if z < 0.0 {
                if j == n {
                    return (j, false);
                }
                let lvl = &self.levels[j - 1];
                let dt_next = self.t_grid[j] - self.t_grid[j - 1];
                let [z_next] = stream.step_normals::<1>(j as u64);
                return (j, z_next * dt_next.sqrt() > lvl.alpha);
            }
        }
        (n + 1, false)
    }

    fn check_paths(paths: usize) -> Result<()> {
        if paths < 1000 {
            return Err(CounterexampleError::Argument(format!(
                "need at least 1000 paths, got {paths}"
            )));
        }
        Ok(())
    }

    /// Simulated counterpart of [`premature_value`](Self::premature_value):
    /// draws the increments, locates the event and evaluates the utility of
    /// the wealth held at `t_n` on each path.
    pub fn mc_cross_check(&self, n: usize, paths: usize, seed: u64) -> Result<McEstimate> {
        Self::check_paths(paths)?;
        self.level(n)?;
        let u = &self.evaluation;
        let stopped = u.value_unchecked(self.density_moment(&self.levels[n - 1]));
        let cont = u.value_unchecked(self.continuation_wealth(n).estimate);
        Ok(McEstimate::par_paths(paths, seed, |path| {
            let mut stream = PathStream::new(seed, path, 1);
            match self.sample_event(&mut stream, n) {
                (j, _) if j == n => stopped,
                (j, _) if j > n => cont,
                (j, up) => {
                    let l = &self.levels[j - 1];
                    u.value_unchecked(u.inverse_marginal_unchecked(if up { l.b } else { l.a }))
                }
            }
        }))
    }

    /// Simulated `E[ξ_{t_n}]`, which equals one.
    pub fn mc_density_check(&self, n: usize, paths: usize, seed: u64) -> Result<McEstimate> {
        Self::check_paths(paths)?;
        self.level(n)?;
        Ok(McEstimate::par_paths(paths, seed, |path| {
            let mut stream = PathStream::new(seed, path, 1);
            match self.sample_event(&mut stream, n) {
                (j, up) if j < n => {
                    let l = &self.levels[j - 1];
                    if up {
                        l.b
                    } else {
                        l.a
                    }
                }
                _ => 1.0,
            }
        }))
    }
}
