//! Path simulation, state-price densities and martingale-method values.
//!
//! Randomness is keyed by `(seed, path, step)`, paths are generated in
//! parallel and reduced in path order, so every estimate is a deterministic
//! function of its inputs regardless of the number of worker threads.

mod estimate;
mod model;
mod paths;
mod rng;
mod value;

use thiserror::Error;

use crate::kim_omberg::KoError;
use crate::utility::UtilityError;

pub use estimate::{combined_stderr, par_samples, McEstimate};
pub use model::{FellerCvParams, MarketModel};
pub use paths::{simulate_paths, simulate_paths_with, validate_grid, PathBatch, Scheme, SimOptions};
pub use rng::PathStream;
pub use value::{
    calibrate_multiplier, complete_market_value, complete_market_value_with, complete_value_curve, dual_curve_complete, dual_value_complete,
    dual_value_complete_with, merton_fraction, merton_value_oracle, premature_curve_ko, premature_curve_ko_with,
    state_prices, CompleteValue, CurveRow, PrematureCurve, Strategy, ValueOptions, WealthOutcome, wealth_path,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{0}")]
    Argument(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("budget {x} not bracketed: mean(H I(yH)) is {budget_at_lo} at y=1e-12 and {budget_at_hi} at y=1e12")]
    Calibration {
        x: f64,
        budget_at_lo: f64,
        budget_at_hi: f64,
    },
    #[error("{0}")]
    Regime(String),
    #[error(transparent)]
    Utility(#[from] UtilityError),
    #[error(transparent)]
    KimOmberg(#[from] KoError),
}

/// `E[Z_t]`, which is one when the density is a true martingale.
pub fn martingale_check(model: &MarketModel, t: f64, paths: usize, seed: u64) -> Result<McEstimate, SimError> {
    martingale_check_with(model, t, paths, seed, &SimOptions::default())
}

pub fn martingale_check_with(
    model: &MarketModel,
    t: f64,
    paths: usize,
    seed: u64,
    sim: &SimOptions,
) -> Result<McEstimate, SimError> {
    if !(t > 0.0) {
        return Err(SimError::Argument(format!("time {t} must be > 0")));
    }
    let batch = simulate_paths_with(model, &[0.0, t], paths, seed, sim)?;
    let z: Vec<f64> = (0..paths).map(|i| batch.log_z(i)[1].exp()).collect();
    Ok(McEstimate::from_samples(&z, seed))
}
