//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line before asserting.

use std::sync::Arc;
use std::time::Instant;

use horizon_lab::conditions::{
    cond_main_estimate, cond_main_estimate_with, gamma_threshold, novikov_curve, novikov_curve_with, CheckOptions,
    ConditionVerdict,
};
use horizon_lab::counterexample::{build_instance, TimeGrid};
use horizon_lab::kim_omberg::{analytic_c, analytic_pole, solve_riccati, KimOmbergModel, KimOmbergParams};
use horizon_lab::market_sim::{
    combined_stderr, complete_market_value, dual_curve_complete, merton_fraction, merton_value_oracle,
    premature_curve_ko, simulate_paths, simulate_paths_with, wealth_path, FellerCvParams, MarketModel, McEstimate,
    SimOptions, Strategy,
};
use horizon_lab::numerics::{lin_space, log_space};
use horizon_lab::UtilitySpec;
use horizon_lab_cli::{compute, parse_config, RunOptions};

const PATHS: usize = 100_000;
const K_SIGMA: f64 = 3.0;

fn report(criterion: u32, ok: bool, detail: String) {
    println!("{} criterion {criterion}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn exploding() -> KimOmbergParams {
    KimOmbergParams::new(0.0, 0.05, 1.0, 0.5, 0.5).unwrap()
}

fn merton() -> MarketModel {
    MarketModel::Merton {
        r: 0.02,
        lambda: 0.3,
        sigma: 0.2,
    }
}

fn feller() -> MarketModel {
    MarketModel::FellerCv(FellerCvParams {
        kappa: 2.0,
        theta: 0.04,
        beta: 0.3,
        rho: -0.5,
        v0: 0.04,
        c: [0.05, 0.01, 1.0, 0.0],
    })
}

fn ko_model() -> KimOmbergModel {
    KimOmbergModel::solve(exploding(), 10.0, 1e-9).unwrap()
}

#[test]
fn criterion_01_riccati_cross_validation() {
    let start = Instant::now();
    let params = exploding();
    let sol = solve_riccati(&params, 10.0, 1e-9).unwrap();
    let t_star = sol.explosion_time().unwrap();
    let mut max_err = 0.0f64;
    let dense = lin_space(0.0, 0.95 * t_star, 1001);
    for s in sol.s_grid.iter().copied().filter(|s| *s <= 0.95 * t_star).chain(dense) {
        let numeric = sol.eval(s).unwrap().c;
        let exact = analytic_c(&params, s).unwrap().finite().unwrap();
        max_err = max_err.max((numeric - exact).abs());
    }
    let pole_err = (analytic_pole(&params).unwrap() - t_star).abs();
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        max_err <= 1e-8 && pole_err <= 1e-6 && secs < 1.0,
        format!("max |c_analytic - c_numeric| = {max_err:.3e} (<= 1e-8), |pole - T*| = {pole_err:.3e} (<= 1e-6), {secs:.3} s (< 1 s)"),
    );
}

#[test]
fn criterion_02_explosion_reproduction() {
    let m = ko_model();
    let b = m.riccati.explosion.unwrap();
    let e0 = m.value_e(0.0).unwrap().finite().unwrap();
    // Largest E(K) over the last 1e-3 before the bracket.
    let near = lin_space(b.lo - 1e-3, b.lo, 1001);
    let max_log_e = near
        .iter()
        .filter_map(|&k| m.log_value_e(k).unwrap().finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let grid = lin_space(0.0, b.lo, 1001);
    let values: Vec<f64> = grid[..1000].iter().map(|&k| m.value_e(k).unwrap().finite().unwrap()).collect();
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    let exploded = m.value_e(b.hi).unwrap().is_exploded();
    report(
        2,
        max_log_e > 1e6f64.ln() && e0 == 1.0 && monotone && exploded,
        format!(
            "ln max E(K) near T* = {max_log_e:.3e} (> ln 1e6), E(0) = {e0}, nondecreasing on 1000 points: {monotone}, bracket width {:.1e}",
            b.width()
        ),
    );
}

#[test]
fn criterion_03_closed_form_vs_monte_carlo() {
    let start = Instant::now();
    let m = ko_model();
    let k = 0.5 * m.explosion_time().unwrap();
    let exact = m.value_e(k).unwrap().finite().unwrap();
    let q = m.params.moment_exponent();
    let batch = simulate_paths(&MarketModel::KimOmberg(m.params), &[0.0, k], PATHS, 2024).unwrap();
    let samples: Vec<f64> = (0..PATHS).map(|i| (q * batch.log_z(i)[1]).exp()).collect();
    let est = McEstimate::from_samples(&samples, 2024);
    let secs = start.elapsed().as_secs_f64();
    let z = (est.mean - exact) / est.stderr;
    report(
        3,
        z.abs() <= K_SIGMA && secs < 10.0,
        format!("E(K) = {exact:.6}, MC = {:.6} +- {:.2e}, z = {z:.2}, {secs:.2} s (< 10 s)", est.mean, est.stderr),
    );
}

#[test]
fn criterion_04_counterexample_divergence() {
    let start = Instant::now();
    let u = UtilitySpec::power(-1.0).unwrap();
    let inst = build_instance(&u, 20, &TimeGrid::Dyadic).unwrap();
    let term = inst.terminal_value();
    let prem: Vec<_> = (1..=20).map(|n| inst.premature_value(n).unwrap()).collect();
    let secs = start.elapsed().as_secs_f64();
    // First n after which the upper bounds decrease strictly to the end.
    let from = (0..prem.len())
        .find(|&i| prem[i..].windows(2).all(|w| w[1].hi < w[0].hi))
        .unwrap();
    let eventually = from + 1 < prem.len();
    let last_hi = prem[19].hi;
    let mean_err = inst.levels.iter().map(|l| (l.mean() - 1.0).abs()).fold(0.0, f64::max);
    let ranking = prem.iter().all(|p| p.hi <= term.lo);
    report(
        4,
        eventually && last_hi < -10.0 && term.is_finite() && term.width() < 1e-6 && mean_err <= 1e-14 && ranking && secs < 1.0,
        format!(
            "premature_hi strictly decreasing from n = {}, premature_hi(20) = {last_hi:.3}, terminal = [{:.9}, {:.9}] (width {:.1e}), max |E[Y_k] - 1| = {mean_err:.1e}, ranking {ranking}, {secs:.3} s",
            from + 1,
            term.lo,
            term.hi,
            term.width()
        ),
    );
}

#[test]
fn criterion_05_log_utility_control() {
    let u = UtilitySpec::power(-1.0).unwrap();
    let inst = build_instance(&u, 20, &TimeGrid::Dyadic).unwrap().with_utility(UtilitySpec::log()).unwrap();
    let term = inst.terminal_value();
    let gaps: Vec<f64> = (15..=20)
        .map(|n| (inst.premature_value(n).unwrap().estimate - term.estimate).abs())
        .collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
    report(
        5,
        worst < 1e-6,
        format!(
            "max_(n>=15) |premature(n) - terminal| = {worst:.3e} (need < 1e-6); gap at n = 20: {:.3e}; gaps shrinking: {shrinking}",
            gaps[gaps.len() - 1]
        ),
    );
}

#[test]
fn criterion_06_martingale_normalization() {
    let models = [
        merton(),
        MarketModel::KimOmberg(KimOmbergParams::new(0.1, 0.05, 0.3, 0.1, 0.5).unwrap()),
        feller(),
    ];
    let times = [0.25, 0.5, 1.0];
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for (idx, m) in models.iter().enumerate() {
        let batch = simulate_paths(m, &[0.0, 0.25, 0.5, 1.0], PATHS, 60 + idx as u64).unwrap();
        for (j, t) in times.iter().enumerate() {
            let samples: Vec<f64> = (0..PATHS).map(|i| batch.log_z(i)[j + 1].exp()).collect();
            let e = McEstimate::from_samples(&samples, batch.seed);
            let z = (e.mean - 1.0) / e.stderr;
            worst = worst.max(z.abs());
            lines.push(format!("{}@{t}: z = {z:.2}", m.label()));
        }
    }
    report(6, worst <= K_SIGMA, format!("max |z| = {worst:.2} (<= 3); {}", lines.join(", ")));
}

#[test]
fn criterion_07_merton_oracle_agreement() {
    let (r, lambda, sigma, p) = (0.02, 0.3, 0.2, -1.0);
    let u = UtilitySpec::power(p).unwrap();
    let oracle = merton_value_oracle(r, lambda, p, 1.0, 1.0).unwrap();
    let mc = complete_market_value(&merton(), &u, 1.0, 1.0, PATHS, 7).unwrap();
    let z_mc = (mc.u.mean - oracle) / mc.u.stderr;

    let grid = lin_space(0.0, 1.0, 51);
    let sim = SimOptions {
        record_brownian: true,
        ..Default::default()
    };
    let batch = simulate_paths_with(&merton(), &grid, PATHS, 8, &sim).unwrap();
    let pi_star = merton_fraction(lambda, sigma, p);
    let value_of = |s: &Strategy| wealth_path(&batch, s, 1.0).unwrap().expected_utility(&u, 8);
    let best = value_of(&Strategy::Constant(pi_star));
    let z_best = (best.mean - oracle) / best.stderr;
    let alternatives = [
        ("bank", Strategy::Constant(0.0)),
        ("half", Strategy::Constant(0.5 * pi_star)),
        ("one-and-half", Strategy::Constant(1.5 * pi_star)),
        ("double", Strategy::Constant(2.0 * pi_star)),
        ("all-in", Strategy::Constant(1.0)),
        ("deleveraging", Strategy::Feedback(Arc::new(move |t, _| pi_star * (1.0 - 0.5 * t)))),
    ];
    let mut worst_excess = f64::NEG_INFINITY;
    for (_, s) in &alternatives {
        let v = value_of(s);
        worst_excess = worst_excess.max((v.mean - mc.u.mean) / combined_stderr(v.stderr, mc.u.stderr));
    }
    report(
        7,
        z_mc.abs() <= K_SIGMA && z_best.abs() <= K_SIGMA && worst_excess <= K_SIGMA,
        format!(
            "oracle {oracle:.6}; martingale method {:.6} (z = {z_mc:.2}); Merton fraction {:.6} (z = {z_best:.2}); largest alternative excess {worst_excess:.2} combined stderr",
            mc.u.mean, best.mean
        ),
    );
}

fn duality_gaps(model: &MarketModel, u: &UtilitySpec, k: f64, seed: u64) -> (f64, f64) {
    let x = 1.0;
    let primal = complete_market_value(model, u, x, k, PATHS, seed).unwrap();
    let mut factors = log_space(0.25, 4.0, 9);
    factors[4] = 1.0;
    let ys: Vec<f64> = factors.iter().map(|f| f * primal.y).collect();
    // Independent sample: on the calibration sample the gap at y* is zero
    // by construction.
    let duals = dual_curve_complete(model, u, &ys, k, PATHS, seed + 1000, &SimOptions::default()).unwrap();
    let mut worst_below = f64::INFINITY;
    let mut at_opt = f64::NAN;
    for ((f, y), d) in factors.iter().zip(&ys).zip(&duals) {
        let z = (d.mean + x * y - primal.u.mean) / combined_stderr(d.stderr, primal.u.stderr);
        worst_below = worst_below.min(z);
        if *f == 1.0 {
            at_opt = z;
        }
    }
    (worst_below, at_opt)
}

#[test]
fn criterion_08_duality() {
    let m = ko_model();
    let ko = MarketModel::KimOmberg(m.params);
    let k = 0.5 * m.explosion_time().unwrap();
    let (merton_min, merton_opt) = duality_gaps(&merton(), &UtilitySpec::power(-1.0).unwrap(), 1.0, 81);
    let (ko_min, ko_opt) = duality_gaps(&ko, &UtilitySpec::power(0.5).unwrap(), k, 82);
    report(
        8,
        merton_min >= -K_SIGMA && ko_min >= -K_SIGMA && merton_opt.abs() <= K_SIGMA && ko_opt.abs() <= K_SIGMA,
        format!(
            "(v(y) + xy - u) / combined stderr: merton min {merton_min:.3}, at y* {merton_opt:.3}; kim_omberg min {ko_min:.3}, at y* {ko_opt:.3}"
        ),
    );
}

fn csv_columns(text: &[u8], names: &[&str]) -> Vec<Vec<f64>> {
    let text = std::str::from_utf8(text).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx: Vec<usize> = names.iter().map(|n| header.iter().position(|h| h == n).unwrap()).collect();
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    idx.iter().map(|&i| rows.iter().map(|r| r[i]).collect()).collect()
}

#[test]
fn criterion_09_q1_monotonicity() {
    let configs = [
        r#"{"experiment": "q1-curve", "paths": 20000, "seed": 9, "grid": {"points": 21},
            "model": {"kind": "merton", "r": 0.02, "lambda": 0.3, "sigma": 0.2}, "utility": {"kind": "power", "p": -1}}"#,
        r#"{"experiment": "q1-curve", "paths": 20000, "seed": 9, "horizon": 0.5, "grid": {"points": 21},
            "model": {"kind": "kim_omberg", "kappa": 0, "theta": 0.05, "beta": 1, "mu0": 0.5, "p": 0.5}}"#,
    ];
    let mut details = Vec::new();
    let mut ok = true;
    for (name, cfg) in ["merton", "kim_omberg"].iter().zip(configs) {
        let out = compute(&parse_config(cfg).unwrap(), &RunOptions::default()).unwrap();
        let cols = csv_columns(&out[0].content, &["u_exact", "u_mc", "stderr"]);
        let exact_ok = cols[0].windows(2).all(|w| w[1] >= w[0]);
        let worst = (1..cols[1].len())
            .map(|i| (cols[1][i - 1] - cols[1][i]) / combined_stderr(cols[2][i], cols[2][i - 1]).max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        ok &= exact_ok && worst <= K_SIGMA;
        details.push(format!("{name}: exact nondecreasing {exact_ok}, worst MC drop {worst:.2} combined stderr"));
    }
    report(9, ok, details.join("; "));
}

#[test]
fn criterion_10_q2_positive_case() {
    let m = ko_model();
    let horizon = 0.5 * m.explosion_time().unwrap();
    let ks = lin_space(0.0, horizon, 11);
    let curve = premature_curve_ko(&m.params, 1.0, horizon, &ks, PATHS, 10).unwrap();
    let end = curve.rows.last().unwrap();
    let u_t = m.primal_value(1.0, horizon).unwrap().finite().unwrap();
    let z_end = (end.estimate - u_t) / end.stderr;
    let worst = curve
        .rows
        .iter()
        .map(|r| {
            let bound = m.primal_value(1.0, r.k).unwrap().finite().unwrap();
            if r.stderr > 0.0 {
                (r.estimate - bound) / r.stderr
            } else if r.estimate <= bound + 1e-12 {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    report(
        10,
        z_end.abs() <= K_SIGMA && worst <= K_SIGMA,
        format!("endpoint {:.6} vs u(T) {u_t:.6} (z = {z_end:.2}); max (estimate - u^(K)) / stderr = {worst:.2}", end.estimate),
    );
}

#[test]
fn criterion_11_condition_checkers() {
    let (r, lambda, delta, gamma) = (0.02, 0.3, 0.5, -2.5);
    let grid = [0.8, 0.85, 0.9, 0.95, 1.0];
    let nov = novikov_curve(&merton(), delta, &grid, PATHS, 11).unwrap();
    let nov_exact = (delta * (r + lambda * lambda)).exp();
    let nov_z = nov
        .values
        .iter()
        .map(|v| if v.stderr > 0.0 { (v.mean - nov_exact).abs() / v.stderr } else { (v.mean - nov_exact).abs() / (1e-15 * nov_exact) })
        .fold(0.0, f64::max);
    let main = cond_main_estimate(&merton(), gamma, 0.2, 1.0, &grid, PATHS, 12).unwrap();
    let main_z = main
        .values
        .iter()
        .map(|v| {
            let tau = 1.0 - v.t;
            let exact = (-gamma * r * tau).exp() * (0.5 * (gamma * gamma - gamma) * lambda * lambda * tau).exp();
            if v.stderr > 0.0 {
                (v.mean - exact).abs() / v.stderr
            } else {
                (v.mean - exact).abs() / (1e-12 * exact)
            }
        })
        .fold(0.0, f64::max);
    let opts = CheckOptions {
        sim: SimOptions {
            max_dt: 1.0 / 128.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let f_nov = novikov_curve_with(&feller(), 0.1, &grid, PATHS, 13, &opts).unwrap().verdict;
    let f_main = cond_main_estimate_with(&feller(), -0.1, 0.2, 1.0, &grid, PATHS / 2, 14, &opts).unwrap().verdict;
    let thr = gamma_threshold(-1.0).unwrap();
    report(
        11,
        nov_z <= K_SIGMA
            && main_z <= K_SIGMA
            && f_nov == ConditionVerdict::HoldsNumerically
            && f_main == ConditionVerdict::HoldsNumerically
            && thr == -2.0,
        format!(
            "merton novikov max z {nov_z:.2}, density moment max z {main_z:.2}; feller_cv verdicts {f_nov:?} / {f_main:?}; gamma_threshold(-1) = {thr}"
        ),
    );
}

#[test]
fn criterion_12_reproducibility() {
    let configs = [
        r#"{"experiment": "q1-curve", "paths": 5000, "seed": 12, "horizon": 0.5, "grid": {"points": 5},
            "model": {"kind": "kim_omberg", "kappa": 0, "theta": 0.05, "beta": 1, "mu0": 0.5, "p": 0.5}}"#,
        r#"{"experiment": "check-conditions", "paths": 5000, "seed": 12, "grid": {"points": 5},
            "model": {"kind": "feller_cv", "kappa": 2, "theta": 0.04, "beta": 0.3, "rho": -0.5, "v0": 0.04, "c": [0.05, 0.01, 1, 0]},
            "conditions": {"delta": 0.1, "gamma": -0.1, "epsilon": 0.2}}"#,
        r#"{"experiment": "duality-check", "paths": 5000, "seed": 12, "grid": {"points": 5},
            "model": {"kind": "merton", "r": 0.02, "lambda": 0.3, "sigma": 0.2}, "utility": {"kind": "log"}}"#,
    ];
    let mut ok = true;
    let mut runs = 0;
    for cfg in configs {
        let cfg = parse_config(cfg).unwrap();
        let hashes = |threads: usize| -> Vec<String> {
            let opts = RunOptions {
                threads: Some(threads),
                ..Default::default()
            };
            compute(&cfg, &opts).unwrap().iter().map(|a| a.sha256()).collect()
        };
        let reference = hashes(1);
        for threads in [1, 4, 8] {
            runs += 1;
            ok &= hashes(threads) == reference;
        }
    }
    report(12, ok, format!("{runs} runs over 3 configs at 1, 4 and 8 threads, all artifact hashes identical: {ok}"));
}
