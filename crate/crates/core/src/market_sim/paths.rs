use rayon::prelude::*;
use serde::Serialize;

use super::{MarketModel, PathStream, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Constant coefficients; every column is exact.
    Exact,
    /// Exact Gaussian transition of the OU drift jointly with the Brownian
    /// increment; left-point `log Z`.
    OuExactLeftPoint,
    /// Full-truncation Euler for the variance; left-point `log Z`.
    FullTruncationEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimOptions {
    /// Largest internal step; each grid interval is split evenly.
    pub max_dt: f64,
    /// Keep the Brownian path on the grid (needed for wealth dynamics).
    pub record_brownian: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            max_dt: 1.0 / 512.0,
            record_brownian: false,
        }
    }
}

/// Simulated paths stored at the nodes of `time_grid`. Columns are laid out
/// path-major: node `j` of path `i` sits at `i·len + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub model: MarketModel,
    pub time_grid: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    state: Vec<f64>,
    log_z: Vec<f64>,
    log_s0: Vec<f64>,
    brownian: Option<Vec<f64>>,
}

impl PathBatch {
    fn row<'a>(&self, col: &'a [f64], path: usize) -> &'a [f64] {
        let len = self.time_grid.len();
        &col[path * len..(path + 1) * len]
    }

    /// `μ_t` (OU), `v_t` (Feller) or the constant stock drift (Merton).
    pub fn state(&self, path: usize) -> &[f64] {
        self.row(&self.state, path)
    }

    pub fn log_z(&self, path: usize) -> &[f64] {
        self.row(&self.log_z, path)
    }

    /// `∫ r du`.
    pub fn log_s0(&self, path: usize) -> &[f64] {
        self.row(&self.log_s0, path)
    }

    pub fn brownian(&self, path: usize) -> Option<&[f64]> {
        self.brownian.as_ref().map(|b| self.row(b, path))
    }

    /// Index of the node equal to `t`.
    pub fn node(&self, t: f64) -> Option<usize> {
        self.time_grid.iter().position(|&s| s == t)
    }

    /// `log(Z_t/S⁰_t)` for every path at node `j`.
    pub fn log_state_price(&self, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.log_z(i)[j] - self.log_s0(i)[j]).collect()
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<(), SimError> {
    if grid.len() < 2 || grid[0] != 0.0 {
        return Err(SimError::Argument("time grid must start at 0 and have at least two points".into()));
    }
    if !grid.iter().all(|t| t.is_finite()) || !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(SimError::Argument("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn simulate_paths(model: &MarketModel, grid: &[f64], n: usize, seed: u64) -> Result<PathBatch, SimError> {
    simulate_paths_with(model, grid, n, seed, &SimOptions::default())
}

struct PathColumns {
    state: Vec<f64>,
    log_z: Vec<f64>,
    log_s0: Vec<f64>,
    brownian: Vec<f64>,
}

pub fn simulate_paths_with(
    model: &MarketModel,
    grid: &[f64],
    n: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<PathBatch, SimError> {
    model.validate()?;
    validate_grid(grid)?;
    if n == 0 {
        return Err(SimError::Argument("path count must be at least 1".into()));
    }
    if !(opts.max_dt > 0.0) {
        return Err(SimError::Argument("max_dt must be > 0".into()));
    }
    let substeps: Vec<usize> = grid
        .windows(2)
        .map(|w| match model {
            MarketModel::Merton { .. } => 1,
            _ => (((w[1] - w[0]) / opts.max_dt).ceil() as usize).max(1),
        })
        .collect();
    let scheme = match model {
        MarketModel::Merton { .. } => Scheme::Exact,
        MarketModel::KimOmberg(_) => Scheme::OuExactLeftPoint,
        MarketModel::FellerCv(_) => Scheme::FullTruncationEuler,
    };
    let record = opts.record_brownian;
    let paths: Vec<PathColumns> = (0..n as u64)
        .into_par_iter()
        .map(|path| simulate_one(model, grid, &substeps, seed, path, record))
        .collect();
    let cap = n * grid.len();
    let mut batch = PathBatch {
        model: *model,
        time_grid: grid.to_vec(),
        n_paths: n,
        seed,
        scheme,
        state: Vec::with_capacity(cap),
        log_z: Vec::with_capacity(cap),
        log_s0: Vec::with_capacity(cap),
        brownian: record.then(|| Vec::with_capacity(cap)),
    };
    for p in paths {
        batch.state.extend_from_slice(&p.state);
        batch.log_z.extend_from_slice(&p.log_z);
        batch.log_s0.extend_from_slice(&p.log_s0);
        if let Some(b) = batch.brownian.as_mut() {
            b.extend_from_slice(&p.brownian);
        }
    }
    Ok(batch)
}

/// `(μ_{t+dt}, ΔB)` is jointly Gaussian given `μ_t`: the drift moves by
/// `decay`, loads `slope` on `ΔB` and has independent residual `resid`.
struct OuStep {
    decay: f64,
    slope: f64,
    resid: f64,
}

impl OuStep {
    fn new(kappa: f64, beta: f64, dt: f64) -> Self {
        let (decay, var, cov) = if kappa == 0.0 {
            (1.0, beta * beta * dt, beta * dt)
        } else {
            (
                (-kappa * dt).exp(),
                beta * beta * -(-2.0 * kappa * dt).exp_m1() / (2.0 * kappa),
                beta * -(-kappa * dt).exp_m1() / kappa,
            )
        };
        Self {
            decay,
            slope: cov / dt,
            resid: (var - cov * cov / dt).max(0.0).sqrt(),
        }
    }
}

fn simulate_one(model: &MarketModel, grid: &[f64], substeps: &[usize], seed: u64, path: u64, record: bool) -> PathColumns {
    let len = grid.len();
    let mut cols = PathColumns {
        state: Vec::with_capacity(len),
        log_z: Vec::with_capacity(len),
        log_s0: Vec::with_capacity(len),
        brownian: Vec::with_capacity(if record { len } else { 0 }),
    };
    let mut stream = PathStream::new(seed, path, 2);
    let (mut x, mut lz, mut ls0, mut b) = (model.initial_state(), 0.0f64, 0.0f64, 0.0f64);
    let push = |cols: &mut PathColumns, x: f64, lz: f64, ls0: f64, b: f64| {
        cols.state.push(x);
        cols.log_z.push(lz);
        cols.log_s0.push(ls0);
        if record {
            cols.brownian.push(b);
        }
    };
    push(&mut cols, x, lz, ls0, b);
    let mut step: u64 = 0;
    for (w, &m) in grid.windows(2).zip(substeps) {
        let dt = (w[1] - w[0]) / m as f64;
        let sq = dt.sqrt();
        let ou = match model {
            MarketModel::KimOmberg(p) => Some(OuStep::new(p.kappa, p.beta, dt)),
            _ => None,
        };
        for _ in 0..m {
            let [z1, z2] = stream.step_normals::<2>(step);
            step += 1;
            let db = sq * z1;
            let lam = model.lambda(x);
            lz += -lam * db - 0.5 * lam * lam * dt;
            b += db;
            match model {
                MarketModel::Merton { r, .. } => ls0 += r * dt,
                MarketModel::KimOmberg(p) => {
                    let s = ou.as_ref().expect("OU coefficients");
                    x = p.theta + (x - p.theta) * s.decay + s.slope * db + s.resid * z2;
                }
                MarketModel::FellerCv(p) => {
                    let v = x.max(0.0);
                    let dw = sq * z2;
                    let shock = p.rho * db + (1.0 - p.rho * p.rho).max(0.0).sqrt() * dw;
                    x += p.kappa * (p.theta - v) * dt + p.beta * v.sqrt() * shock;
                }
            }
        }
        push(&mut cols, x, lz, ls0, b);
    }
    cols
}
