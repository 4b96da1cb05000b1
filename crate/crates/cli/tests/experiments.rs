use std::fs;
use std::path::Path;
use std::process::Command;

use horizon_lab_cli::{compute, parse_config, run_experiment, RunManifest, RunOptions};

fn config(json: &str, dir: &Path) -> horizon_lab_cli::ExperimentConfig {
    let mut cfg = parse_config(json).unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

#[test]
fn ko_explosion_ends_at_bracket() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"experiment": "ko-explosion",
            "model": {"kind": "kim_omberg", "kappa": 0, "theta": 0.05, "beta": 1, "mu0": 0.5, "p": 0.5}}"#,
        tmp.path(),
    );
    let m = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(m.artifacts.len(), 1);
    let (h, rows) = read_csv(&tmp.path().join("ko_explosion.csv"));
    assert_eq!(h, ["k", "value_e", "primal_value", "exploded"]);
    assert_eq!(rows.len(), 52);
    let e = col(&h, "value_e");
    assert_eq!(rows[0][e], 1.0);
    let finite: Vec<&Vec<f64>> = rows.iter().filter(|r| r[3] == 0.0).collect();
    assert_eq!(finite.len(), 50);
    assert!(finite.windows(2).all(|w| w[1][e] >= w[0][e] && w[1][2] >= w[0][2]));
    let (lo, hi) = (rows[50][0], rows[51][0]);
    assert!(hi > lo && hi - lo <= 1e-9);
    assert!(rows[50][e].is_infinite() && rows[51][3] == 1.0);
}

#[test]
fn counterexample_diverges() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"experiment": "counterexample", "utility": {"kind": "power", "p": -1}}"#, tmp.path());
    run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (h, rows) = read_csv(&tmp.path().join("counterexample.csv"));
    assert_eq!(h, ["n", "t_n", "premature_lo", "premature_hi", "terminal_lo", "terminal_hi"]);
    assert_eq!(rows.len(), 20);
    let last = &rows[19];
    assert_eq!(last[0], 20.0);
    assert!(last[3] < -10.0);
    assert!(last[4].is_finite() && last[5].is_finite());
    assert!(rows.iter().all(|r| r[3] <= r[5]));
}

#[test]
fn q1_curve_on_merton_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"experiment": "q1-curve", "paths": 2000, "seed": 3,
            "model": {"kind": "merton", "r": 0.02, "lambda": 0.3, "sigma": 0.2},
            "utility": {"kind": "power", "p": -1}, "grid": {"points": 11}}"#,
        tmp.path(),
    );
    run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (h, rows) = read_csv(&tmp.path().join("q1_curve.csv"));
    assert_eq!(h, ["k", "u_exact", "u_mc", "stderr", "y"]);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][1], -1.0);
    assert!(rows.windows(2).all(|w| w[1][1] >= w[0][1]));
    for r in &rows {
        assert!((r[2] - r[1]).abs() <= 4.0 * r[3] + 1e-12);
    }
}

#[test]
fn q2_curve_and_duality_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"experiment": "q2-curve", "paths": 2000, "horizon": 0.5, "grid": {"points": 6},
            "model": {"kind": "kim_omberg", "kappa": 0, "theta": 0.05, "beta": 1, "mu0": 0.5, "p": 0.5}}"#,
        &tmp.path().join("q2"),
    );
    run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (h, rows) = read_csv(&tmp.path().join("q2/q2_curve.csv"));
    assert_eq!(h, ["k", "estimate", "stderr", "u_k", "u_t"]);
    assert_eq!(rows.len(), 6);
    let last = rows.last().unwrap();
    assert!((last[1] - last[4]).abs() <= 4.0 * last[2]);

    let cfg = config(
        r#"{"experiment": "duality-check", "paths": 2000, "grid": {"points": 5},
            "model": {"kind": "merton", "r": 0.02, "lambda": 0.3, "sigma": 0.2},
            "utility": {"kind": "power", "p": -1}}"#,
        &tmp.path().join("dual"),
    );
    run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (h, rows) = read_csv(&tmp.path().join("dual/duality_check.csv"));
    let (gap, band, factor) = (col(&h, "gap"), col(&h, "band"), col(&h, "factor"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!(r[gap] >= -r[band]);
        if r[factor] == 1.0 {
            assert!(r[gap].abs() <= r[band]);
        }
    }
}

#[test]
fn check_conditions_writes_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"experiment": "check-conditions", "paths": 5000, "grid": {"points": 5},
            "model": {"kind": "merton", "r": 0.02, "lambda": 0.3, "sigma": 0.2},
            "utility": {"kind": "power", "p": -1},
            "conditions": {"delta": 0.5, "gamma": -2.5, "epsilon": 0.2}}"#,
        tmp.path(),
    );
    let m = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let files: Vec<&str> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
    assert_eq!(files, ["novikov.csv", "density_power_moment.csv", "verdict.json"]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["novikov"]["verdict"], "holds_numerically");
    assert_eq!(v["density_power_moment"]["verdict"], "holds_numerically");
    assert_eq!(v["gamma_threshold"]["threshold"], -2.0);
    assert_eq!(v["gamma_threshold"]["gamma_below_threshold"], true);
    assert_eq!(v["marginal_power_bounds"]["verdict"], "holds_numerically");
    let (_, rows) = read_csv(&tmp.path().join("novikov.csv"));
    assert_eq!(rows.len(), 5);
    assert!((rows[0][0] - 0.8).abs() < 1e-15 && rows[4][0] == 1.0);
}

#[test]
fn manifest_records_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"experiment": "counterexample", "seed": 11, "utility": {"kind": "power", "p": -2}}"#, tmp.path());
    let m = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let on_disk: RunManifest = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(on_disk.artifacts, m.artifacts);
    assert_eq!(on_disk.seed, 11);
    assert_eq!(on_disk.config, cfg);
    assert_eq!(on_disk.library_version, env!("CARGO_PKG_VERSION"));
    // Re-running the echoed config reproduces the hashes.
    let again = compute(&on_disk.config, &RunOptions::default()).unwrap();
    assert_eq!(again[0].sha256(), m.artifacts[0].sha256);
}

#[test]
fn computation_failure_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    // x_k = 1/(k·2^k) leaves the range of f64 bracketing long before level 1100.
    let cfg = config(
        r#"{"experiment": "counterexample", "utility": {"kind": "power", "p": -1},
            "counterexample": {"n_max": 1100}}"#,
        &out,
    );
    let err = run_experiment(&cfg, &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    assert!(!out.exists());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_horizon-lab"))
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.json");
    let out = tmp.path().join("out");
    fs::write(
        &good,
        format!(
            r#"{{"experiment": "counterexample", "utility": {{"kind": "power", "p": -1}}, "counterexample": {{"n_max": 8}},
                "output_dir": {:?}}}"#,
            out.display().to_string()
        ),
    )
    .unwrap();
    let st = bin().args(["validate", "--config"]).arg(&good).status().unwrap();
    assert_eq!(st.code(), Some(0));
    assert!(!out.exists());
    let o = bin().args(["run", "--threads", "2", "--config"]).arg(&good).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("counterexample.csv").exists() && out.join("manifest.json").exists());

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"experiment": "q1-curve", "paths": -1, "model": {"kind": "merton", "r": 0, "lambda": 0.3, "sigma": 0.2}, "utility": {"kind": "power", "p": 1.5}}"#).unwrap();
    let o = bin().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("paths:") && err.contains("utility:"), "{err}");

    let o = bin().args(["run", "--config"]).arg(&good).env("HORIZON_LAB_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin().args(["run", "--config"]).arg(tmp.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
