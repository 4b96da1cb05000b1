//! Experiment configuration: strict JSON parsing and itemized validation.

use std::path::PathBuf;

use horizon_lab::kim_omberg::{KimOmbergModel, KimOmbergParams};
use horizon_lab::market_sim::{FellerCvParams, MarketModel};
use horizon_lab::UtilitySpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_PATHS: i64 = 100_000;
pub const DEFAULT_GRID_POINTS: usize = 50;
pub const DEFAULT_N_MAX: usize = 20;
/// Search range for the explosion time when no horizon is given.
pub const DEFAULT_EXPLOSION_SEARCH: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    KoExplosion,
    Counterexample,
    Q1Curve,
    Q2Curve,
    DualityCheck,
    CheckConditions,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::KoExplosion => "ko-explosion",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::Q1Curve => "q1-curve",
            ExperimentKind::Q2Curve => "q2-curve",
            ExperimentKind::DualityCheck => "duality-check",
            ExperimentKind::CheckConditions => "check-conditions",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Merton {
        r: f64,
        lambda: f64,
        sigma: f64,
    },
    KimOmberg {
        kappa: f64,
        theta: f64,
        beta: f64,
        mu0: f64,
        p: f64,
    },
    FellerCv {
        kappa: f64,
        theta: f64,
        beta: f64,
        rho: f64,
        v0: f64,
        c: [f64; 4],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityConfig {
    Power { p: f64 },
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    /// Lower end; its meaning depends on the experiment.
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_GRID_POINTS,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsConfig {
    pub delta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Explicit level times; the dyadic grid `1 − 2^-k` when absent.
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            t_grid: None,
        }
    }
}

fn default_points() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

fn default_paths() -> i64 {
    DEFAULT_PATHS
}

fn default_x() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

/// One experiment run as read from JSON. Blocks an experiment does not use
/// must be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default = "default_x")]
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_paths")]
    pub paths: i64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
}

/// Strict parse. Syntax, unknown keys and type mismatches are reported
/// before any semantic check.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("config: {e}")]))?;
    cfg.fill_defaults();
    Ok(cfg)
}

/// A configuration whose every field has been checked against the
/// preconditions of the library calls it drives.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub model: Option<MarketModel>,
    pub utility: Option<UtilitySpec>,
    pub ko: Option<KimOmbergModel>,
    pub paths: usize,
}

impl ExperimentConfig {
    fn fill_defaults(&mut self) {
        use ExperimentKind::*;
        match self.experiment {
            KoExplosion | Q1Curve | Q2Curve | DualityCheck | CheckConditions => {
                self.grid.get_or_insert_with(GridConfig::default);
            }
            Counterexample => {
                self.counterexample.get_or_insert_with(CounterexampleConfig::default);
            }
        }
        if matches!(self.experiment, Q1Curve | DualityCheck | CheckConditions) && self.horizon.is_none() {
            self.horizon = Some(1.0);
        }
        if self.experiment == Q1Curve && self.utility.is_none() {
            if let Some(ModelConfig::KimOmberg { p, .. }) = self.model {
                self.utility = Some(UtilityConfig::Power { p });
            }
        }
    }

    pub fn validate(&self) -> Result<Validated, CliError> {
        use ExperimentKind::*;
        let mut errs: Vec<String> = Vec::new();
        let kind = self.experiment;
        let name = kind.name();

        let uses_model = kind != Counterexample;
        let uses_utility = matches!(kind, Counterexample | Q1Curve | DualityCheck | CheckConditions);
        let uses_grid = kind != Counterexample;
        let uses_paths = matches!(kind, Q1Curve | Q2Curve | DualityCheck | CheckConditions);
        let uses_x = matches!(kind, KoExplosion | Q1Curve | Q2Curve | DualityCheck);
        for (present, block, used) in [
            (self.model.is_some(), "model", uses_model),
            (self.utility.is_some(), "utility", uses_utility),
            (self.grid.is_some(), "grid", uses_grid),
            (self.conditions.is_some(), "conditions", kind == CheckConditions),
            (self.counterexample.is_some(), "counterexample", kind == Counterexample),
        ] {
            if present && !used {
                errs.push(format!("{block}: not used by {name}"));
            }
        }
        if uses_model && self.model.is_none() {
            errs.push(format!("model: required by {name}"));
        }
        if matches!(kind, Counterexample | DualityCheck) && self.utility.is_none() {
            errs.push(format!("utility: required by {name}"));
        }
        if kind == Q1Curve && self.utility.is_none() {
            errs.push("utility: required by q1-curve unless the model fixes the exponent".into());
        }
        if kind == CheckConditions && self.conditions.is_none() {
            errs.push("conditions: required by check-conditions".into());
        }

        let paths = if self.paths >= 1 {
            self.paths as usize
        } else {
            if uses_paths {
                errs.push(format!("paths: {} must be at least 1", self.paths));
            }
            0
        };
        if uses_x && !(self.x > 0.0 && self.x.is_finite()) {
            errs.push(format!("x: {} must be finite and > 0", self.x));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                errs.push(format!("horizon: {h} must be finite and > 0"));
            }
        }
        if kind == Q2Curve && self.horizon.is_none() {
            errs.push("horizon: required by q2-curve".into());
        }
        if kind == Counterexample && self.horizon.is_some() {
            errs.push("horizon: the counterexample market lives on [0, 1]".into());
        }

        let model = self.model.and_then(|m| match m.build() {
            Ok(m) => Some(m),
            Err(e) => {
                errs.push(format!("model: {e}"));
                None
            }
        });
        let utility = self.utility.and_then(|u| match u.build() {
            Ok(u) => Some(u),
            Err(e) => {
                errs.push(format!("utility: {e}"));
                None
            }
        });

        if let Some(g) = &self.grid {
            if g.points < 2 {
                errs.push(format!("grid.points: {} must be at least 2", g.points));
            }
            for (what, v) in [("grid.lo", g.lo), ("grid.hi", g.hi)] {
                if let Some(v) = v {
                    if !(v >= 0.0 && v.is_finite()) {
                        errs.push(format!("{what}: {v} must be finite and >= 0"));
                    }
                }
            }
            if let (Some(lo), Some(hi)) = (g.lo, g.hi) {
                if !(lo < hi) {
                    errs.push(format!("grid: lo = {lo} must be below hi = {hi}"));
                }
            }
            if kind == DualityCheck && g.lo == Some(0.0) {
                errs.push("grid.lo: multiplier factors must be > 0".into());
            }
            if kind == CheckConditions && (g.lo.is_some() || g.hi.is_some()) {
                errs.push("grid: check-conditions places its grid on [horizon − epsilon, horizon]".into());
            }
        }

        if let Some(c) = &self.conditions {
            if !(c.delta > 0.0 && c.delta.is_finite()) {
                errs.push(format!("conditions.delta: {} must be finite and > 0", c.delta));
            }
            if !(c.gamma < 0.0 && c.gamma.is_finite()) {
                errs.push(format!("conditions.gamma: {} must be finite and < 0", c.gamma));
            }
            if !(c.epsilon > 0.0 && c.epsilon.is_finite()) {
                errs.push(format!("conditions.epsilon: {} must be finite and > 0", c.epsilon));
            }
            if let Some(h) = self.horizon {
                if c.epsilon > h {
                    errs.push(format!("conditions.epsilon: {} exceeds the horizon {h}", c.epsilon));
                }
            }
        }

        if let Some(c) = &self.counterexample {
            if c.n_max < 1 {
                errs.push("counterexample.n_max: must be at least 1".into());
            }
            if let Some(t) = &c.t_grid {
                if t.len() < c.n_max + 1 {
                    errs.push(format!("counterexample.t_grid: need n_max + 1 = {} times, got {}", c.n_max + 1, t.len()));
                }
                if !t.iter().all(|&s| s > 0.0 && s < 1.0) || !t.windows(2).all(|w| w[1] > w[0]) {
                    errs.push("counterexample.t_grid: must be strictly increasing inside (0, 1)".into());
                }
            }
        }
        if kind == Counterexample {
            if let Some(UtilityConfig::Log) = self.utility {
                errs.push("utility: the construction needs a utility with liminf a·U'(a) = 0, log is safe".into());
            }
            if let Some(UtilityConfig::Power { p }) = self.utility {
                if p > 0.0 {
                    errs.push(format!("utility.p: {p} gives a utility bounded below; the construction needs p < 0"));
                }
            }
        }

        if matches!(kind, KoExplosion | Q2Curve) {
            if let Some(m) = &model {
                if !matches!(m, MarketModel::KimOmberg(_)) {
                    errs.push(format!("model.kind: {name} needs kim_omberg"));
                }
            }
        }
        if matches!(kind, Q1Curve | DualityCheck) {
            if let Some(m) = &model {
                if !matches!(m, MarketModel::Merton { .. } | MarketModel::KimOmberg(_)) {
                    errs.push(format!("model.kind: {name} needs a complete model (merton or kim_omberg)"));
                }
            }
        }
        if kind == Q1Curve {
            if let (Some(ModelConfig::KimOmberg { p, .. }), Some(u)) = (self.model, self.utility) {
                if u != (UtilityConfig::Power { p }) {
                    errs.push(format!("utility: the kim_omberg closed form needs the power utility with p = {p}"));
                }
            }
        }

        // The OU-drift experiments need the explosion time before anything
        // can be scheduled.
        let mut ko = None;
        if let Some(MarketModel::KimOmberg(params)) = model {
            if matches!(kind, KoExplosion | Q1Curve | Q2Curve | DualityCheck) {
                let s_max = match kind {
                    KoExplosion => self.horizon.unwrap_or(DEFAULT_EXPLOSION_SEARCH),
                    _ => self.horizon.unwrap_or(1.0),
                };
                if s_max > 0.0 && s_max.is_finite() {
                    match KimOmbergModel::solve(params, s_max, 1e-9) {
                        Ok(m) => {
                            if kind != KoExplosion {
                                if let Some(t) = m.explosion_time() {
                                    errs.push(format!("horizon: {s_max} is not below the explosion time {t:.6}"));
                                }
                            }
                            ko = Some(m);
                        }
                        Err(e) => errs.push(format!("model: {e}")),
                    }
                }
            }
        }

        if errs.is_empty() {
            Ok(Validated {
                config: self.clone(),
                model,
                utility,
                ko,
                paths,
            })
        } else {
            Err(CliError::Validation(errs))
        }
    }

    pub fn grid(&self) -> GridConfig {
        self.grid.unwrap_or_default()
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<MarketModel, String> {
        let m = match *self {
            ModelConfig::Merton { r, lambda, sigma } => MarketModel::Merton { r, lambda, sigma },
            ModelConfig::KimOmberg {
                kappa,
                theta,
                beta,
                mu0,
                p,
            } => MarketModel::KimOmberg(KimOmbergParams::new(kappa, theta, beta, mu0, p).map_err(|e| e.to_string())?),
            ModelConfig::FellerCv {
                kappa,
                theta,
                beta,
                rho,
                v0,
                c,
            } => MarketModel::FellerCv(FellerCvParams {
                kappa,
                theta,
                beta,
                rho,
                v0,
                c,
            }),
        };
        m.validate().map_err(|e| e.to_string())?;
        Ok(m)
    }
}

impl UtilityConfig {
    pub fn build(&self) -> Result<UtilitySpec, String> {
        match *self {
            UtilityConfig::Power { p } => UtilitySpec::power(p).map_err(|e| e.to_string()),
            UtilityConfig::Log => Ok(UtilitySpec::log()),
        }
    }
}
