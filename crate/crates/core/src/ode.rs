//! Dormand–Prince 5(4) integrator with dense output and threshold stopping.
//!
//! Fixed-size systems only (`[f64; N]`); the Riccati system that needs it has
//! three components. When a `stop` predicate fires inside a step, the step is
//! bisected until the crossing is bracketed to the requested width.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at s = {s} (h = {h:e}, state = {state:?})")]
    StepUnderflow { s: f64, h: f64, state: Vec<f64> },
    #[error("step budget of {max_steps} exhausted at s = {s}")]
    TooManySteps { s: f64, max_steps: usize },
    #[error("non-finite state at s = {s}")]
    NonFinite { s: f64 },
    #[error("invalid integration interval [{start}, {end}]")]
    BadInterval { start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Target width of the bracket around a `stop` crossing.
    pub bracket_tol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            bracket_tol: 1e-9,
            max_steps: 1_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Continuous extension over one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSegment<const N: usize> {
    pub start: f64,
    pub h: f64,
    coef: [[f64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn end(&self) -> f64 {
        self.start + self.h
    }

    pub fn eval(&self, s: f64) -> [f64; N] {
        let th = (s - self.start) / self.h;
        let th1 = 1.0 - th;
        let r = &self.coef;
        std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
    }
}

/// Accepted-step nodes plus dense output between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub nodes: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub segments: Vec<DenseSegment<N>>,
    /// `Some((lo, hi))` when the stop predicate fired: false at `lo`, true at `hi`.
    pub stop_bracket: Option<(f64, f64)>,
}

impl<const N: usize> Trajectory<N> {
    pub fn end(&self) -> f64 {
        *self.nodes.last().expect("trajectory has at least the initial node")
    }

    /// Dense evaluation on `[nodes[0], end()]`.
    pub fn eval(&self, s: f64) -> Option<[f64; N]> {
        let first = self.nodes[0];
        if s < first || s > self.end() || s.is_nan() {
            return None;
        }
        if self.segments.is_empty() || s == first {
            return Some(self.states[0]);
        }
        let idx = self.segments.partition_point(|seg| seg.end() < s);
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        if s == seg.end() {
            return Some(self.states[idx + 1]);
        }
        Some(seg.eval(s))
    }
}

struct Step<const N: usize> {
    y_new: [f64; N],
    k_new: [f64; N],
    err: f64,
    coef: [[f64; N]; 5],
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn try_step<const N: usize, F>(f: &F, s: f64, y: &[f64; N], k1: &[f64; N], h: f64, opts: &Dopri5Options) -> Step<N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k2 = f(s + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = f(s + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(s + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(s + C5 * h, &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(s + h, &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(s + h, &y_new);

    let mut acc = 0.0;
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (e / sc).powi(2);
    }
    let err = (acc / N as f64).sqrt();

    let mut coef = [[0.0; N]; 5];
    for i in 0..N {
        let dy = y_new[i] - y[i];
        let bspl = h * k1[i] - dy;
        coef[0][i] = y[i];
        coef[1][i] = dy;
        coef[2][i] = bspl;
        coef[3][i] = dy - h * k7[i] - bspl;
        coef[4][i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step {
        y_new,
        k_new: k7,
        err,
        coef,
    }
}

/// Integrate `y' = f(s, y)` from `start` to `end`, stopping early when
/// `stop(s, y)` becomes true. The crossing is then bracketed to
/// `opts.bracket_tol` by halving steps from the last accepted point.
pub fn integrate<const N: usize, F, G>(
    f: F,
    start: f64,
    y0: [f64; N],
    end: f64,
    opts: &Dopri5Options,
    stop: G,
) -> Result<Trajectory<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    G: Fn(f64, &[f64; N]) -> bool,
{
    if !(end > start) || !start.is_finite() || !end.is_finite() {
        return Err(OdeError::BadInterval { start, end });
    }
    let mut s = start;
    let mut y = y0;
    let mut k = f(s, &y);
    let mut traj = Trajectory {
        nodes: vec![s],
        states: vec![y],
        segments: Vec::new(),
        stop_bracket: None,
    };
    let span = end - start;
    let mut h = (1e-3 * span).min(1e-3);
    // Upper end of a detected crossing bracket, if any.
    let mut crossing_hi: Option<f64> = None;

    for _ in 0..opts.max_steps {
        if let Some(hi) = crossing_hi {
            if hi - s <= opts.bracket_tol {
                traj.stop_bracket = Some((s, hi));
                return Ok(traj);
            }
            h = h.min(0.5 * (hi - s));
        }
        if s + h >= end {
            h = end - s;
        }
        if h <= 1e-15 * s.abs().max(1.0) {
            return Err(OdeError::StepUnderflow {
                s,
                h,
                state: y.to_vec(),
            });
        }
        let step = try_step(&f, s, &y, &k, h, opts);
        let finite = step.y_new.iter().all(|v| v.is_finite()) && step.err.is_finite();
        if finite && step.err <= 1.0 {
            let s_new = if s + h >= end { end } else { s + h };
            if stop(s_new, &step.y_new) {
                crossing_hi = Some(s_new);
                h *= 0.5;
                continue;
            }
            traj.segments.push(DenseSegment {
                start: s,
                h: s_new - s,
                coef: step.coef,
            });
            s = s_new;
            y = step.y_new;
            k = step.k_new;
            traj.nodes.push(s);
            traj.states.push(y);
            if s >= end {
                return Ok(traj);
            }
            let fac = if step.err == 0.0 { 5.0 } else { (0.9 * step.err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else if !finite {
            // Overshot a singularity: treat like a rejected step.
            h *= 0.25;
        } else {
            h *= (0.9 * step.err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { s });
    }
    Err(OdeError::TooManySteps {
        s,
        max_steps: opts.max_steps,
    })
}
