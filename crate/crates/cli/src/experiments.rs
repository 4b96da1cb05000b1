//! One function per experiment. Each returns the artifacts to write; nothing
//! touches the filesystem here.

use horizon_lab::conditions::{
    cond_main_estimate, gamma_threshold, marginal_power_bounds, novikov_curve, ConditionReport,
};
use horizon_lab::counterexample::{build_instance, TimeGrid};
use horizon_lab::kim_omberg::Explosive;
use horizon_lab::market_sim::{
    combined_stderr, complete_market_value_with, complete_value_curve, dual_curve_complete, merton_value_oracle,
    premature_curve_ko, MarketModel, SimOptions, ValueOptions,
};
use horizon_lab::numerics::{lin_space, log_space};
use horizon_lab::{ProbeGrid, UtilitySpec};
use serde::Serialize;

use crate::config::{ExperimentKind, Validated, DEFAULT_EXPLOSION_SEARCH};
use crate::output::{num, Artifact, Csv};
use crate::CliError;

fn comp<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Computation(e.to_string())
}

fn explosive(v: Explosive<f64>) -> (f64, bool) {
    match v {
        Explosive::Finite(x) => (x, false),
        Explosive::Exploded => (f64::INFINITY, true),
    }
}

pub fn run(v: &Validated, fresh_paths: bool) -> Result<Vec<Artifact>, CliError> {
    match v.config.experiment {
        ExperimentKind::KoExplosion => ko_explosion(v),
        ExperimentKind::Counterexample => counterexample(v),
        ExperimentKind::Q1Curve => q1_curve(v, fresh_paths),
        ExperimentKind::Q2Curve => q2_curve(v),
        ExperimentKind::DualityCheck => duality_check(v, fresh_paths),
        ExperimentKind::CheckConditions => check_conditions(v),
    }
}

/// `(K, E(K), u^(K)(x))` on `[0, T*)`, closed by the two ends of the
/// explosion bracket.
fn ko_explosion(v: &Validated) -> Result<Vec<Artifact>, CliError> {
    let m = v.ko.as_ref().expect("validated kim_omberg model");
    let cfg = &v.config;
    let g = cfg.grid();
    let s_max = cfg.horizon.unwrap_or(DEFAULT_EXPLOSION_SEARCH);
    let bracket = m.riccati.explosion;
    let end = bracket.map_or(s_max, |b| b.lo);
    let lo = g.lo.unwrap_or(0.0).min(end);
    let hi = g.hi.unwrap_or(end).min(end);
    let ks: Vec<f64> = match bracket {
        // Every K in the bracket counts as exploded, so the uniform grid stops
        // one step short of its lower end.
        Some(_) => {
            let mut k = lin_space(lo, hi, g.points + 1);
            k.pop();
            k
        }
        None => lin_space(lo, hi, g.points),
    };
    let mut csv = Csv::new(&["k", "value_e", "primal_value", "exploded"]);
    let mut row = |k: f64| -> Result<(), CliError> {
        let (e, exploded) = explosive(m.value_e(k).map_err(comp)?);
        let (u, _) = explosive(m.primal_value(cfg.x, k).map_err(comp)?);
        csv.row(vec![num(k), num(e), num(u), (exploded as u8).to_string()]);
        Ok(())
    };
    for &k in &ks {
        row(k)?;
    }
    if let Some(b) = bracket {
        row(b.lo)?;
        row(b.hi)?;
    }
    Ok(vec![csv.into_artifact("ko_explosion.csv")])
}

fn counterexample(v: &Validated) -> Result<Vec<Artifact>, CliError> {
    let c = v.config.counterexample.clone().unwrap_or_default();
    let u = v.utility.as_ref().expect("validated utility");
    let grid = match c.t_grid {
        Some(t) => TimeGrid::Explicit(t),
        None => TimeGrid::Dyadic,
    };
    let inst = build_instance(u, c.n_max, &grid).map_err(comp)?;
    let term = inst.terminal_value();
    let mut csv = Csv::new(&["n", "t_n", "premature_lo", "premature_hi", "terminal_lo", "terminal_hi"]);
    for n in 1..=c.n_max {
        let prem = inst.premature_value(n).map_err(comp)?;
        csv.row(vec![
            n.to_string(),
            num(inst.t_grid[n - 1]),
            num(prem.lo),
            num(prem.hi),
            num(term.lo),
            num(term.hi),
        ]);
    }
    Ok(vec![csv.into_artifact("counterexample.csv")])
}

fn k_grid(v: &Validated, horizon: f64) -> Vec<f64> {
    let g = v.config.grid();
    lin_space(g.lo.unwrap_or(0.0), g.hi.unwrap_or(horizon).min(horizon), g.points)
}

fn exact_value(v: &Validated, u: &UtilitySpec, k: f64) -> Result<f64, CliError> {
    let x = v.config.x;
    match v.model.as_ref().expect("validated model") {
        MarketModel::Merton { r, lambda, .. } => {
            let p = u.exponent().expect("built-in utility");
            merton_value_oracle(*r, *lambda, p, x, k).map_err(comp)
        }
        MarketModel::KimOmberg(_) => {
            let m = v.ko.as_ref().expect("solved kim_omberg model");
            Ok(explosive(m.primal_value(x, k).map_err(comp)?).0)
        }
        MarketModel::FellerCv(_) => unreachable!("validation requires a complete model"),
    }
}

/// `u^(K)(x)` against `K`: closed form and martingale-method Monte Carlo.
fn q1_curve(v: &Validated, fresh_paths: bool) -> Result<Vec<Artifact>, CliError> {
    let cfg = &v.config;
    let horizon = cfg.horizon.expect("defaulted horizon");
    let u = v.utility.as_ref().expect("validated utility");
    let model = v.model.as_ref().expect("validated model");
    let ks = k_grid(v, horizon);
    let opts = ValueOptions {
        fresh_paths,
        sim: SimOptions::default(),
    };
    let curve = complete_value_curve(model, u, cfg.x, &ks, v.paths, cfg.seed, &opts).map_err(comp)?;
    let mut csv = Csv::new(&["k", "u_exact", "u_mc", "stderr", "y"]);
    for (k, val) in curve {
        csv.row(vec![num(k), num(exact_value(v, u, k)?), num(val.u.mean), num(val.u.stderr), num(val.y)]);
    }
    Ok(vec![csv.into_artifact("q1_curve.csv")])
}

/// Value of stopping the `T`-horizon optimizer at `K`, with the bounds
/// `u^(K)(x)` and `u^(T)(x)`.
fn q2_curve(v: &Validated) -> Result<Vec<Artifact>, CliError> {
    let cfg = &v.config;
    let horizon = cfg.horizon.expect("validated horizon");
    let m = v.ko.as_ref().expect("solved kim_omberg model");
    let ks = k_grid(v, horizon);
    let curve = premature_curve_ko(&m.params, cfg.x, horizon, &ks, v.paths, cfg.seed).map_err(comp)?;
    let u_t = explosive(m.primal_value(cfg.x, horizon).map_err(comp)?).0;
    let mut csv = Csv::new(&["k", "estimate", "stderr", "u_k", "u_t"]);
    for r in curve.rows {
        let u_k = explosive(m.primal_value(cfg.x, r.k).map_err(comp)?).0;
        csv.row(vec![num(r.k), num(r.estimate), num(r.stderr), num(u_k), num(u_t)]);
    }
    Ok(vec![csv.into_artifact("q2_curve.csv")])
}

/// `v(y) + x·y − u(x)` for multipliers around the calibrated one.
fn duality_check(v: &Validated, fresh_paths: bool) -> Result<Vec<Artifact>, CliError> {
    let cfg = &v.config;
    let horizon = cfg.horizon.expect("defaulted horizon");
    let u = v.utility.as_ref().expect("validated utility");
    let model = v.model.as_ref().expect("validated model");
    let opts = ValueOptions {
        fresh_paths,
        sim: SimOptions::default(),
    };
    let primal = complete_market_value_with(model, u, cfg.x, horizon, v.paths, cfg.seed, &opts).map_err(comp)?;
    let g = cfg.grid();
    let mut factors = log_space(g.lo.unwrap_or(0.25), g.hi.unwrap_or(4.0), g.points);
    if !factors.contains(&1.0) {
        factors.push(1.0);
        factors.sort_by(f64::total_cmp);
    }
    let ys: Vec<f64> = factors.iter().map(|f| f * primal.y).collect();
    let duals = dual_curve_complete(model, u, &ys, horizon, v.paths, cfg.seed, &opts.sim).map_err(comp)?;
    let mut csv = Csv::new(&["factor", "y", "v", "v_stderr", "u", "u_stderr", "gap", "band"]);
    for ((f, y), d) in factors.iter().zip(&ys).zip(&duals) {
        let gap = d.mean + cfg.x * y - primal.u.mean;
        let band = 3.0 * combined_stderr(d.stderr, primal.u.stderr);
        csv.row(vec![
            num(*f),
            num(*y),
            num(d.mean),
            num(d.stderr),
            num(primal.u.mean),
            num(primal.u.stderr),
            num(gap),
            num(band),
        ]);
    }
    Ok(vec![csv.into_artifact("duality_check.csv")])
}

#[derive(Serialize)]
struct GammaCheck {
    p: f64,
    threshold: f64,
    gamma: f64,
    gamma_below_threshold: bool,
}

#[derive(Serialize)]
struct VerdictBlock {
    novikov: ConditionReport,
    density_power_moment: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_threshold: Option<GammaCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginal_power_bounds: Option<ConditionReport>,
}

fn report_csv(rep: &ConditionReport, file: &str) -> Artifact {
    let mut csv = Csv::new(&["t", "mean", "stderr", "overflow_fraction"]);
    for g in &rep.values {
        csv.row(vec![num(g.t), num(g.mean), num(g.stderr), num(g.overflow_fraction)]);
    }
    csv.into_artifact(file)
}

fn check_conditions(v: &Validated) -> Result<Vec<Artifact>, CliError> {
    let cfg = &v.config;
    let horizon = cfg.horizon.expect("defaulted horizon");
    let c = cfg.conditions.expect("validated conditions");
    let model = v.model.as_ref().expect("validated model");
    let grid = lin_space(horizon - c.epsilon, horizon, cfg.grid().points);
    let nov = novikov_curve(model, c.delta, &grid, v.paths, cfg.seed).map_err(comp)?;
    let main = cond_main_estimate(model, c.gamma, c.epsilon, horizon, &grid, v.paths, cfg.seed).map_err(comp)?;
    let power_p = v.utility.as_ref().and_then(|u| u.exponent()).filter(|p| *p < 0.0);
    let gamma = match power_p {
        Some(p) => {
            let threshold = gamma_threshold(p).map_err(comp)?;
            Some(GammaCheck {
                p,
                threshold,
                gamma: c.gamma,
                gamma_below_threshold: c.gamma < threshold,
            })
        }
        None => None,
    };
    let bounds = match (v.utility.as_ref(), power_p) {
        (Some(u), Some(p)) => Some(marginal_power_bounds(u, p, &ProbeGrid::default()).map_err(comp)?),
        _ => None,
    };
    let block = VerdictBlock {
        novikov: nov,
        density_power_moment: main,
        gamma_threshold: gamma,
        marginal_power_bounds: bounds,
    };
    let json = serde_json::to_string_pretty(&block).map_err(comp)? + "\n";
    Ok(vec![
        report_csv(&block.novikov, "novikov.csv"),
        report_csv(&block.density_power_moment, "density_power_moment.csv"),
        Artifact {
            name: "verdict.json".into(),
            content: json.into_bytes(),
        },
    ])
}
