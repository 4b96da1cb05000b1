//! Complete market with an Ornstein–Uhlenbeck drift and a positive power
//! investor.
//!
//! With `r = 0`, `σ = 1` and `dμ = κ(θ − μ)dt + β dB`, the moment
//! `E(K) = E[Z_K^{p/(p−1)}]` is exponential-affine in the initial drift,
//!
//! ```text
//! E(K) = exp(a(K) + b(K)·μ0 + c(K)·μ0²/2),
//! ```
//!
//! where `(a, b, c)` solve a Riccati system started at zero. When the
//! quadratic on the right-hand side of the `c` equation has no real root,
//! `c` is a shifted tangent and blows up at a finite time `T*`; the value
//! function `u^(K)(x) = E(K)^(1−p)·x^p/p` explodes with it.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;
use thiserror::Error;

use crate::ode::{integrate, Dopri5Options, OdeError, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KoError {
    #[error("invalid model parameter {what} = {value}: {requirement}")]
    InvalidParams {
        what: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("{0}")]
    Regime(String),
    #[error("Riccati integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("time-to-horizon {s} lies beyond the solved range [0, {solved}]")]
    BeyondSolvedRange { s: f64, solved: f64 },
}

pub type Result<T> = std::result::Result<T, KoError>;

/// Either a finite value or the marker that the horizon is at or past the
/// explosion time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Explosive<T> {
    Finite(T),
    Exploded,
}

impl<T> Explosive<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Explosive::Finite(v) => Some(v),
            Explosive::Exploded => None,
        }
    }

    pub fn is_exploded(&self) -> bool {
        matches!(self, Explosive::Exploded)
    }

    pub fn map<U, F: FnOnce(T) -> U>(self, f: F) -> Explosive<U> {
        match self {
            Explosive::Finite(v) => Explosive::Finite(f(v)),
            Explosive::Exploded => Explosive::Exploded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KimOmbergParams {
    pub kappa: f64,
    pub theta: f64,
    pub beta: f64,
    pub mu0: f64,
    pub p: f64,
}

impl KimOmbergParams {
    pub fn new(kappa: f64, theta: f64, beta: f64, mu0: f64, p: f64) -> Result<Self> {
        let params = Self {
            kappa,
            theta,
            beta,
            mu0,
            p,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what, value, requirement| Err(KoError::InvalidParams { what, value, requirement });
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return bad("kappa", self.kappa, "must be finite and >= 0");
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad("beta", self.beta, "must be finite and > 0");
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p", self.p, "must lie in (0, 1)");
        }
        if !self.theta.is_finite() {
            return bad("theta", self.theta, "must be finite");
        }
        if !self.mu0.is_finite() {
            return bad("mu0", self.mu0, "must be finite");
        }
        Ok(())
    }

    /// `p/(p−1)`, the exponent of the density inside `E(K)`.
    pub fn moment_exponent(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// Coefficients of `c' = A·c² + B·c + C`.
    fn quadratic(&self) -> (f64, f64, f64) {
        let q = self.moment_exponent();
        let a = self.beta * self.beta;
        let b = -2.0 * (self.kappa + self.beta * q);
        let c = self.p / ((self.p - 1.0) * (self.p - 1.0));
        (a, b, c)
    }

    /// Right-hand side of the Riccati system, state ordered `[c, b, a]`.
    fn rhs(&self, y: &[f64; 3]) -> [f64; 3] {
        let (qa, qb, qc) = self.quadratic();
        let (c, b) = (y[0], y[1]);
        let beta2 = self.beta * self.beta;
        let kt = self.kappa * self.theta;
        [
            qc + qb * c + qa * c * c,
            kt * c + b * (beta2 * c - self.kappa - self.beta * self.moment_exponent()),
            kt * b + 0.5 * beta2 * (b * b + c),
        ]
    }
}

/// `4(κ + βp/(p−1))² − 4β²p/(p−1)²`. Negative values put `c` on a tangent
/// branch that explodes in finite time.
pub fn discriminant(params: &KimOmbergParams) -> f64 {
    let (a, b, c) = params.quadratic();
    b * b - 4.0 * a * c
}

/// Tangent-branch constants: `c(s) = q·tan(A·q·s + φ) − h`.
struct Tangent {
    rate: f64,
    q: f64,
    h: f64,
    phase: f64,
}

fn tangent(params: &KimOmbergParams) -> Result<Tangent> {
    let disc = discriminant(params);
    if !(disc < 0.0) {
        return Err(KoError::Regime(format!(
            "closed-form tangent solution needs a negative discriminant, got {disc}"
        )));
    }
    let (qa, qb, _) = params.quadratic();
    // c' = A((c + h)² + q²) after completing the square.
    let h = qb / (2.0 * qa);
    let q = (-disc).sqrt() / (2.0 * qa);
    Ok(Tangent {
        rate: qa * q,
        q,
        h,
        phase: (h / q).atan(),
    })
}

/// First pole of the closed-form `c`.
pub fn analytic_pole(params: &KimOmbergParams) -> Result<f64> {
    let t = tangent(params)?;
    Ok((FRAC_PI_2 - t.phase) / t.rate)
}

/// Closed-form `c(s)` on the tangent branch.
pub fn analytic_c(params: &KimOmbergParams, s: f64) -> Result<Explosive<f64>> {
    if !(s >= 0.0) {
        return Err(KoError::InvalidParams {
            what: "s",
            value: s,
            requirement: "must be >= 0",
        });
    }
    let t = tangent(params)?;
    if s == 0.0 {
        return Ok(Explosive::Finite(0.0));
    }
    let angle = t.rate * s + t.phase;
    if angle >= FRAC_PI_2 {
        return Ok(Explosive::Exploded);
    }
    Ok(Explosive::Finite(t.q * angle.tan() - t.h))
}

/// Mean and variance of the OU drift at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuMoments {
    pub mean: f64,
    pub var: f64,
}

pub fn ou_moments(params: &KimOmbergParams, t: f64) -> OuMoments {
    debug_assert!(t >= 0.0);
    let k = params.kappa;
    if k == 0.0 {
        return OuMoments {
            mean: params.mu0,
            var: params.beta * params.beta * t,
        };
    }
    let decay = (-k * t).exp();
    OuMoments {
        mean: decay * params.mu0 + params.theta * (1.0 - decay),
        // expm1 keeps small κt accurate.
        var: params.beta * params.beta * -(-2.0 * k * t).exp_m1() / (2.0 * k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiOptions {
    pub rtol: f64,
    pub atol: f64,
    /// `c` above this value declares explosion.
    pub blowup_threshold: f64,
    /// Width of the explosion bracket.
    pub bracket_tol: f64,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            blowup_threshold: 1e8,
            bracket_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionMethod {
    Numeric,
    Analytic,
}

/// `[lo, hi]` with `c ≤ threshold` at `lo` and `c > threshold` at `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplosionBracket {
    pub lo: f64,
    pub hi: f64,
}

impl ExplosionBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiPoint {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Solution of the Riccati system on `[0, end]` with dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub s_grid: Vec<f64>,
    pub a_vals: Vec<f64>,
    pub b_vals: Vec<f64>,
    pub c_vals: Vec<f64>,
    pub explosion: Option<ExplosionBracket>,
    pub method: SolutionMethod,
    trajectory: Trajectory<3>,
}

impl RiccatiSolution {
    /// Last time-to-horizon covered by the solution.
    pub fn end(&self) -> f64 {
        self.trajectory.end()
    }

    pub fn explosion_time(&self) -> Option<f64> {
        self.explosion.map(|b| b.midpoint())
    }

    /// Dense evaluation; `None` outside `[0, end()]`.
    pub fn eval(&self, s: f64) -> Option<RiccatiPoint> {
        self.trajectory.eval(s).map(|y| RiccatiPoint {
            c: y[0],
            b: y[1],
            a: y[2],
        })
    }
}

/// Integrate the Riccati system on `[0, s_max]`, stopping at explosion.
/// `tol` is the width of the explosion bracket.
pub fn solve_riccati(params: &KimOmbergParams, s_max: f64, tol: f64) -> Result<RiccatiSolution> {
    solve_riccati_with(
        params,
        s_max,
        &RiccatiOptions {
            bracket_tol: tol,
            ..Default::default()
        },
    )
}

pub fn solve_riccati_with(params: &KimOmbergParams, s_max: f64, opts: &RiccatiOptions) -> Result<RiccatiSolution> {
    params.validate()?;
    if !(s_max > 0.0) || !s_max.is_finite() {
        return Err(KoError::InvalidParams {
            what: "s_max",
            value: s_max,
            requirement: "must be finite and > 0",
        });
    }
    if !(opts.bracket_tol > 0.0) {
        return Err(KoError::InvalidParams {
            what: "tol",
            value: opts.bracket_tol,
            requirement: "must be > 0",
        });
    }
    let ode_opts = Dopri5Options {
        rtol: opts.rtol,
        atol: opts.atol,
        bracket_tol: opts.bracket_tol,
        ..Default::default()
    };
    let threshold = opts.blowup_threshold;
    let traj = integrate(
        |_, y| params.rhs(y),
        0.0,
        [0.0; 3],
        s_max,
        &ode_opts,
        |_, y| y[0] > threshold,
    )?;
    let explosion = traj.stop_bracket.map(|(lo, hi)| ExplosionBracket { lo, hi });
    Ok(RiccatiSolution {
        s_grid: traj.nodes.clone(),
        c_vals: traj.states.iter().map(|y| y[0]).collect(),
        b_vals: traj.states.iter().map(|y| y[1]).collect(),
        a_vals: traj.states.iter().map(|y| y[2]).collect(),
        explosion,
        method: SolutionMethod::Numeric,
        trajectory: traj,
    })
}

/// A solved model: parameters plus the Riccati solution covering the
/// horizons of interest.
#[derive(Debug, Clone, PartialEq)]
pub struct KimOmbergModel {
    pub params: KimOmbergParams,
    pub riccati: RiccatiSolution,
}

impl KimOmbergModel {
    pub fn solve(params: KimOmbergParams, s_max: f64, tol: f64) -> Result<Self> {
        let riccati = solve_riccati(&params, s_max, tol)?;
        Ok(Self { params, riccati })
    }

    pub fn explosion_time(&self) -> Option<f64> {
        self.riccati.explosion_time()
    }

    fn point(&self, s: f64) -> Result<Explosive<RiccatiPoint>> {
        if !(s >= 0.0) {
            return Err(KoError::InvalidParams {
                what: "horizon",
                value: s,
                requirement: "must be >= 0",
            });
        }
        if let Some(b) = self.riccati.explosion {
            if s >= b.lo {
                return Ok(Explosive::Exploded);
            }
        }
        self.riccati
            .eval(s)
            .map(Explosive::Finite)
            .ok_or(KoError::BeyondSolvedRange {
                s,
                solved: self.riccati.end(),
            })
    }

    /// `ln E(K)`.
    pub fn log_value_e(&self, k: f64) -> Result<Explosive<f64>> {
        let mu0 = self.params.mu0;
        Ok(self.point(k)?.map(|r| r.a + r.b * mu0 + 0.5 * r.c * mu0 * mu0))
    }

    /// `E(K) = E[Z_K^{p/(p−1)}]`.
    pub fn value_e(&self, k: f64) -> Result<Explosive<f64>> {
        if k == 0.0 {
            return Ok(Explosive::Finite(1.0));
        }
        Ok(self.log_value_e(k)?.map(f64::exp))
    }

    /// `u^(K)(x) = E(K)^(1−p)·x^p/p`.
    pub fn primal_value(&self, x: f64, k: f64) -> Result<Explosive<f64>> {
        if !(x > 0.0) {
            return Err(KoError::InvalidParams {
                what: "x",
                value: x,
                requirement: "must be > 0",
            });
        }
        let p = self.params.p;
        Ok(self
            .log_value_e(k)?
            .map(|le| ((1.0 - p) * le + p * x.ln()).exp() / p))
    }

    /// Optimal `T`-horizon wealth at time `t` given `Z_t = z` and `μ_t = mu`,
    /// for Lagrange multiplier `y`.
    pub fn conditional_wealth(&self, y: f64, t: f64, horizon: f64, z: f64, mu: f64) -> Result<f64> {
        if !(y > 0.0) || !(z > 0.0) {
            return Err(KoError::InvalidParams {
                what: "y or z",
                value: if y > 0.0 { z } else { y },
                requirement: "must be > 0",
            });
        }
        if !(t >= 0.0 && t <= horizon) {
            return Err(KoError::InvalidParams {
                what: "t",
                value: t,
                requirement: "must lie in [0, T]",
            });
        }
        if self.point(horizon)?.is_exploded() {
            return Err(KoError::Regime(format!(
                "horizon {horizon} is not below the explosion time"
            )));
        }
        let r = match self.point(horizon - t)? {
            Explosive::Finite(r) => r,
            Explosive::Exploded => unreachable!("time-to-horizon shorter than an unexploded horizon"),
        };
        let p = self.params.p;
        let inv = 1.0 / (p - 1.0);
        let log_x = inv * y.ln() + inv * z.ln() + r.a + r.b * mu + 0.5 * r.c * mu * mu;
        Ok(log_x.exp())
    }

    /// Multiplier `y` solving the budget `x = y^{1/(p−1)}·E(T)`.
    pub fn multiplier(&self, x: f64, horizon: f64) -> Result<f64> {
        let le = self.log_value_e(horizon)?.finite().ok_or_else(|| {
            KoError::Regime(format!("horizon {horizon} is not below the explosion time"))
        })?;
        // y^{1/(p-1)} = x / E(T)
        Ok(((x.ln() - le) * (self.params.p - 1.0)).exp())
    }
}
