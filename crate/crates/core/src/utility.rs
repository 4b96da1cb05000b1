//! Utility functions on the positive half-line.
//!
//! A [`UtilitySpec`] bundles the four maps every other module needs: the
//! utility `U`, its marginal `U'`, the inverse marginal `I = (U')⁻¹` and the
//! convex conjugate `V(b) = sup_a (U(a) − ab) = U(I(b)) − b·I(b)`.
//!
//! [`classify_exit_safety`] probes `a·U'(a)` on a log-spaced grid and decides
//! whether liquidating an optimal strategy before its horizon can be
//! catastrophic for this investor.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{bisect_log, log_space};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("{what} = {value} is outside the domain ({requirement})")]
    Domain {
        what: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("power exponent p = {0} is invalid: need p < 1 and p != 0")]
    InvalidExponent(f64),
    #[error("custom utility broke its contract at a = {at}: {what}")]
    Contract { at: f64, what: String },
    #[error("could not invert {what} at {target}")]
    Inversion { what: &'static str, target: f64 },
}

pub type Result<T> = std::result::Result<T, UtilityError>;

/// Caller-supplied utility. All three maps must be provided; nothing is
/// differentiated numerically.
///
/// [`solve_inverse_marginal`] is available for implementors that do not have
/// a closed-form inverse.
pub trait CustomUtility: Send + Sync + fmt::Debug {
    fn value(&self, a: f64) -> f64;
    fn marginal(&self, a: f64) -> f64;
    fn inverse_marginal(&self, b: f64) -> f64;
}

#[derive(Clone)]
pub enum UtilitySpec {
    /// `U(a) = a^p / p` with `p < 1`, `p ≠ 0`.
    Power { p: f64 },
    Log,
    Custom(Arc<dyn CustomUtility>),
}

impl fmt::Debug for UtilitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilitySpec::Power { p } => write!(f, "Power {{ p: {p} }}"),
            UtilitySpec::Log => write!(f, "Log"),
            UtilitySpec::Custom(c) => write!(f, "Custom({c:?})"),
        }
    }
}

impl PartialEq for UtilitySpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (UtilitySpec::Power { p }, UtilitySpec::Power { p: q }) => p.to_bits() == q.to_bits(),
            (UtilitySpec::Log, UtilitySpec::Log) => true,
            (UtilitySpec::Custom(a), UtilitySpec::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Value and marginal utility at one wealth level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bundle {
    pub value: f64,
    pub marginal: f64,
}

fn check_positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(UtilityError::Domain {
            what,
            value: x,
            requirement: "must be > 0",
        })
    }
}

impl UtilitySpec {
    pub fn power(p: f64) -> Result<Self> {
        if !p.is_finite() || p >= 1.0 || p == 0.0 {
            return Err(UtilityError::InvalidExponent(p));
        }
        Ok(UtilitySpec::Power { p })
    }

    pub fn log() -> Self {
        UtilitySpec::Log
    }

    pub fn custom<C: CustomUtility + 'static>(c: C) -> Self {
        UtilitySpec::Custom(Arc::new(c))
    }

    /// Power exponent, `Some(0.0)` for log.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            UtilitySpec::Power { p } => Some(*p),
            UtilitySpec::Log => Some(0.0),
            UtilitySpec::Custom(_) => None,
        }
    }

    /// `U(a)`. Does not validate `a`; `U(0)` may be `-inf`.
    pub(crate) fn value_unchecked(&self, a: f64) -> f64 {
        match self {
            UtilitySpec::Power { p } => a.powf(*p) / p,
            UtilitySpec::Log => a.ln(),
            UtilitySpec::Custom(c) => c.value(a),
        }
    }

    pub(crate) fn marginal_unchecked(&self, a: f64) -> f64 {
        match self {
            UtilitySpec::Power { p } => a.powf(p - 1.0),
            UtilitySpec::Log => 1.0 / a,
            UtilitySpec::Custom(c) => c.marginal(a),
        }
    }

    pub(crate) fn inverse_marginal_unchecked(&self, b: f64) -> f64 {
        match self {
            UtilitySpec::Power { p } => b.powf(1.0 / (p - 1.0)),
            UtilitySpec::Log => 1.0 / b,
            UtilitySpec::Custom(c) => c.inverse_marginal(b),
        }
    }

    /// `U(a)` for `a > 0`.
    pub fn value(&self, a: f64) -> Result<f64> {
        check_positive("wealth", a)?;
        let u = self.value_unchecked(a);
        if u.is_nan() {
            return Err(UtilityError::Contract {
                at: a,
                what: "value is NaN".into(),
            });
        }
        Ok(u)
    }

    pub fn marginal(&self, a: f64) -> Result<f64> {
        check_positive("wealth", a)?;
        let m = self.marginal_unchecked(a);
        if !(m > 0.0) {
            return Err(UtilityError::Contract {
                at: a,
                what: format!("marginal utility {m} is not strictly positive"),
            });
        }
        Ok(m)
    }

    pub fn eval_bundle(&self, a: f64) -> Result<Bundle> {
        Ok(Bundle {
            value: self.value(a)?,
            marginal: self.marginal(a)?,
        })
    }

    /// `I(b) = (U')⁻¹(b)`.
    pub fn inverse_marginal(&self, b: f64) -> Result<f64> {
        check_positive("marginal level", b)?;
        let i = self.inverse_marginal_unchecked(b);
        if !(i > 0.0) || i.is_nan() {
            return Err(UtilityError::Contract {
                at: b,
                what: format!("inverse marginal {i} is not strictly positive"),
            });
        }
        Ok(i)
    }

    /// Convex conjugate `V(b) = U(I(b)) − b·I(b)`.
    pub fn conjugate(&self, b: f64) -> Result<f64> {
        check_positive("marginal level", b)?;
        match self {
            UtilitySpec::Power { p } => Ok((1.0 - p) / p * b.powf(p / (p - 1.0))),
            UtilitySpec::Log => Ok(-b.ln() - 1.0),
            UtilitySpec::Custom(_) => {
                let i = self.inverse_marginal(b)?;
                Ok(self.value(i)? - b * i)
            }
        }
    }

    /// `U⁻¹(u)`: the wealth level with utility `u`.
    pub fn value_inverse(&self, u: f64) -> Result<f64> {
        let out_of_range = || UtilityError::Inversion {
            what: "utility value",
            target: u,
        };
        match self {
            UtilitySpec::Power { p } => {
                // a^p = p·u needs the product to be positive.
                let pu = p * u;
                if !(pu > 0.0) || !pu.is_finite() {
                    return Err(out_of_range());
                }
                let a = pu.powf(1.0 / p);
                if a > 0.0 && a.is_finite() {
                    Ok(a)
                } else {
                    Err(out_of_range())
                }
            }
            UtilitySpec::Log => {
                let a = u.exp();
                if a > 0.0 && a.is_finite() {
                    Ok(a)
                } else {
                    Err(out_of_range())
                }
            }
            UtilitySpec::Custom(c) => {
                let (lo, hi) = (f64::MIN_POSITIVE, 1e300);
                bisect_log(|a| c.value(a) - u, lo, hi, 1e-15, 4000).ok_or_else(out_of_range)
            }
        }
    }

    /// `sup_a U(a)`. Exact for the built-in kinds; for custom utilities this
    /// is `U(1e300)`, a numeric proxy for the limit.
    pub fn upper_bound(&self) -> f64 {
        match self {
            UtilitySpec::Power { p } if *p < 0.0 => 0.0,
            UtilitySpec::Power { .. } | UtilitySpec::Log => f64::INFINITY,
            UtilitySpec::Custom(c) => c.value(1e300),
        }
    }

    /// `sup_b b·I(b) = sup_a a·U'(a)`. Exact for built-ins; probe based for custom.
    pub fn sup_wealth_elasticity(&self) -> f64 {
        match self {
            UtilitySpec::Power { .. } => f64::INFINITY,
            UtilitySpec::Log => 1.0,
            UtilitySpec::Custom(_) => match classify_exit_safety(self, &ProbeGrid::default()) {
                Ok(r) if r.low_tail == TailTrend::Diverging || r.high_tail == TailTrend::Diverging => {
                    f64::INFINITY
                }
                Ok(r) => r.sup_a_marginal,
                Err(_) => f64::INFINITY,
            },
        }
    }
}

/// Solve `marginal(a) = b` by bisection in `ln a`. Intended for
/// [`CustomUtility::inverse_marginal`] implementations.
pub fn solve_inverse_marginal<F: Fn(f64) -> f64>(marginal: F, b: f64) -> Result<f64> {
    check_positive("marginal level", b)?;
    // marginal is decreasing, so marginal(a) − b changes sign once.
    bisect_log(|a| marginal(a) - b, 1e-300, 1e300, 1e-16, 4000).ok_or(UtilityError::Inversion {
        what: "marginal utility",
        target: b,
    })
}

/// Log-spaced probe grid for asymptotic checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            lo: 1e-8,
            hi: 1e8,
            points: 200,
        }
    }
}

impl ProbeGrid {
    pub fn points(&self) -> Vec<f64> {
        log_space(self.lo, self.hi, self.points)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0) || self.lo > 1e-8 {
            return Err(UtilityError::Domain {
                what: "probe lower end",
                value: self.lo,
                requirement: "must lie in (0, 1e-8]",
            });
        }
        if self.hi < 1e8 || !self.hi.is_finite() {
            return Err(UtilityError::Domain {
                what: "probe upper end",
                value: self.hi,
                requirement: "must be finite and >= 1e8",
            });
        }
        if self.points < 20 {
            return Err(UtilityError::Domain {
                what: "probe points",
                value: self.points as f64,
                requirement: "need at least 20",
            });
        }
        Ok(())
    }
}

/// Monotone trend of `a·U'(a)` over the extreme decade of the probe,
/// read in the direction of the limit (towards 0 or towards +inf).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailTrend {
    Vanishing,
    Flat,
    Diverging,
    NonMonotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitVerdict {
    /// `U` bounded below: premature exit converges by Fatou.
    SafeBoundedBelow,
    /// `U(0) = -inf` but `a·U'(a)` is bounded away from 0 and bounded near 0.
    SafeLogLike,
    /// `U(0) = -inf` and `liminf a·U'(a) = 0` at infinity: a market exists in
    /// which premature exit drives expected utility to `-inf`.
    AtRisk,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitSafetyReport {
    /// Probe infimum of `a·U'(a)`, 0 when a tail vanishes.
    pub inf_a_marginal: f64,
    /// Probe supremum of `a·U'(a)` over the grid.
    pub sup_a_marginal: f64,
    /// Estimate of `limsup a·U'(a)` as `a ↓ 0`.
    pub limsup_at_zero: f64,
    /// Estimate of `liminf a·U'(a)` as `a → ∞`.
    pub liminf_at_infinity: f64,
    pub low_tail: TailTrend,
    pub high_tail: TailTrend,
    pub u_at_zero_is_minus_inf: bool,
    pub bounded_below: bool,
    pub bounded_above: bool,
    pub verdict: ExitVerdict,
}

const TREND_TOL: f64 = 1e-9;
const INADA_ELASTICITY: f64 = 1e-3;

/// `values` ordered in the direction of the limit.
fn tail_trend(values: &[f64]) -> TailTrend {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let eps = 1e-12 * scale;
    let up = values.windows(2).all(|w| w[1] >= w[0] - eps);
    let down = values.windows(2).all(|w| w[1] <= w[0] + eps);
    let (first, last) = (values[0], values[values.len() - 1]);
    let ratio = last / first;
    match (up, down) {
        (true, true) => TailTrend::Flat,
        (true, false) if ratio > 1.0 + TREND_TOL => TailTrend::Diverging,
        (false, true) if ratio < 1.0 - TREND_TOL => TailTrend::Vanishing,
        (true, false) | (false, true) => TailTrend::Flat,
        (false, false) => TailTrend::NonMonotone,
    }
}

/// Classify how risky premature liquidation is for `u` by probing `a·U'(a)`.
pub fn classify_exit_safety(u: &UtilitySpec, probe: &ProbeGrid) -> Result<ExitSafetyReport> {
    probe.validate()?;
    let grid = probe.points();
    let mut g = Vec::with_capacity(grid.len());
    for &a in &grid {
        let m = u.marginal(a)?;
        let v = u.value(a)?;
        if !m.is_finite() || !v.is_finite() {
            return Err(UtilityError::Contract {
                at: a,
                what: "non-finite value or marginal on the probe grid".into(),
            });
        }
        g.push(a * m);
    }
    let low_end = probe.lo * 10.0;
    let high_start = probe.hi / 10.0;
    // Low tail read from larger a towards a ↓ 0.
    let low: Vec<f64> = grid
        .iter()
        .zip(&g)
        .filter(|(a, _)| **a <= low_end * (1.0 + 1e-12))
        .map(|(_, v)| *v)
        .rev()
        .collect();
    let high: Vec<f64> = grid
        .iter()
        .zip(&g)
        .filter(|(a, _)| **a >= high_start * (1.0 - 1e-12))
        .map(|(_, v)| *v)
        .collect();
    let low_tail = tail_trend(&low);
    let high_tail = tail_trend(&high);

    let grid_min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let grid_max = g.iter().copied().fold(0.0, f64::max);
    let limsup_at_zero = match low_tail {
        TailTrend::Diverging => f64::INFINITY,
        _ => low.iter().copied().fold(0.0, f64::max),
    };
    let liminf_at_infinity = match high_tail {
        TailTrend::Vanishing => 0.0,
        _ => high.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let inf_a_marginal = if low_tail == TailTrend::Vanishing || high_tail == TailTrend::Vanishing {
        0.0
    } else {
        grid_min
    };
    // a·U'(a) ≥ c > 0 near zero forces U(a) ≤ U(a0) + c·ln(a/a0) → -inf;
    // polynomial decay makes U' integrable at zero.
    let u_at_zero_is_minus_inf = matches!(low_tail, TailTrend::Flat | TailTrend::Diverging);
    let bounded_below = low_tail == TailTrend::Vanishing;
    let bounded_above = high_tail == TailTrend::Vanishing;

    let verdict = if low_tail == TailTrend::NonMonotone || high_tail == TailTrend::NonMonotone {
        ExitVerdict::Inconclusive
    } else if bounded_below {
        ExitVerdict::SafeBoundedBelow
    } else if u_at_zero_is_minus_inf && inf_a_marginal > 0.0 && limsup_at_zero.is_finite() {
        ExitVerdict::SafeLogLike
    } else if u_at_zero_is_minus_inf && liminf_at_infinity == 0.0 {
        ExitVerdict::AtRisk
    } else {
        ExitVerdict::Inconclusive
    };

    Ok(ExitSafetyReport {
        inf_a_marginal,
        sup_a_marginal: grid_max,
        limsup_at_zero,
        liminf_at_infinity,
        low_tail,
        high_tail,
        u_at_zero_is_minus_inf,
        bounded_below,
        bounded_above,
        verdict,
    })
}

/// Check the standing assumptions on `u` over the probe grid: positive,
/// strictly decreasing marginal with Inada tails; increasing, concave value.
pub fn check_standing_assumptions(u: &UtilitySpec, probe: &ProbeGrid) -> Result<()> {
    probe.validate()?;
    let grid = probe.points();
    let mut vals = Vec::with_capacity(grid.len());
    let mut margs = Vec::with_capacity(grid.len());
    for &a in &grid {
        vals.push(u.value(a)?);
        margs.push(u.marginal(a)?);
    }
    let fail = |at: f64, what: &str| {
        Err(UtilityError::Contract {
            at,
            what: what.to_string(),
        })
    };
    for i in 1..grid.len() {
        if !(margs[i] < margs[i - 1]) {
            return fail(grid[i], "marginal utility is not strictly decreasing");
        }
        if !(vals[i] > vals[i - 1]) {
            return fail(grid[i], "utility is not strictly increasing");
        }
    }
    for i in 1..grid.len() - 1 {
        let left = (vals[i] - vals[i - 1]) / (grid[i] - grid[i - 1]);
        let right = (vals[i + 1] - vals[i]) / (grid[i + 1] - grid[i]);
        if right > left * (1.0 + 1e-9) + 1e-300 {
            return fail(grid[i], "utility is not concave");
        }
    }
    // Inada: U' grows without bound at 0 and decays to 0 at infinity. On a
    // finite grid, ask for a non-negligible log-elasticity of U' over each
    // extreme decade; a marginal levelling off at a positive constant fails.
    let n = grid.len();
    let decade = |lo: usize, hi: usize| (margs[lo] / margs[hi]).ln() / (grid[hi] / grid[lo]).ln();
    let low_decade = grid.iter().position(|a| *a >= probe.lo * 10.0).unwrap_or(n - 1);
    let high_decade = grid.iter().rposition(|a| *a <= probe.hi / 10.0).unwrap_or(0);
    if !(decade(0, low_decade) > INADA_ELASTICITY) {
        return fail(grid[0], "marginal utility does not blow up at zero on the probe");
    }
    if !(decade(high_decade, n - 1) > INADA_ELASTICITY) {
        return fail(grid[n - 1], "marginal utility does not vanish at infinity on the probe");
    }
    Ok(())
}
