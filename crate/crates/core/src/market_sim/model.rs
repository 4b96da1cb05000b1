use serde::Serialize;

use super::SimError;
use crate::kim_omberg::KimOmbergParams;

/// Feller variance with a market price of risk
/// `λ = C0/sqrt(C1 + v) + C2·sqrt(C3 + v)`; zero interest rate, unit
/// volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FellerCvParams {
    pub kappa: f64,
    pub theta: f64,
    pub beta: f64,
    pub rho: f64,
    pub v0: f64,
    pub c: [f64; 4],
}

impl FellerCvParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [("kappa", self.kappa), ("theta", self.theta), ("beta", self.beta), ("v0", self.v0)];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Model(format!("{what} = {v} must be finite and > 0")));
            }
        }
        if !(self.rho >= -1.0 && self.rho <= 1.0) {
            return Err(SimError::Model(format!("rho = {} must lie in [-1, 1]", self.rho)));
        }
        if let Some(i) = self.c.iter().position(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(SimError::Model(format!("C{i} = {} must be finite and >= 0", self.c[i])));
        }
        if self.c[0] > 0.0 && self.c[1] == 0.0 {
            return Err(SimError::Model("C0 > 0 requires C1 > 0".into()));
        }
        Ok(())
    }

    /// Market price of risk at variance `v`, clamped at zero.
    pub fn lambda(&self, v: f64) -> f64 {
        let v = v.max(0.0);
        let [c0, c1, c2, c3] = self.c;
        let first = if c0 == 0.0 { 0.0 } else { c0 / (c1 + v).sqrt() };
        first + c2 * (c3 + v).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarketModel {
    /// Constant rate, market price of risk and volatility.
    Merton { r: f64, lambda: f64, sigma: f64 },
    /// Ornstein–Uhlenbeck drift, `r = 0`, `σ = 1`.
    KimOmberg(KimOmbergParams),
    FellerCv(FellerCvParams),
}

impl MarketModel {
    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            MarketModel::Merton { r, lambda, sigma } => {
                if !(*r >= 0.0 && r.is_finite()) {
                    return Err(SimError::Model(format!("r = {r} must be finite and >= 0")));
                }
                if !lambda.is_finite() {
                    return Err(SimError::Model(format!("lambda = {lambda} must be finite")));
                }
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(SimError::Model(format!("sigma = {sigma} must be finite and > 0")));
                }
                Ok(())
            }
            MarketModel::KimOmberg(p) => p.validate().map_err(|e| SimError::Model(e.to_string())),
            MarketModel::FellerCv(p) => p.validate(),
        }
    }

    /// Models whose only noise is the stock's Brownian motion.
    pub fn is_complete(&self) -> bool {
        match self {
            MarketModel::Merton { .. } | MarketModel::KimOmberg(_) => true,
            MarketModel::FellerCv(p) => p.rho.abs() == 1.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MarketModel::Merton { .. } => "merton",
            MarketModel::KimOmberg(_) => "kim_omberg",
            MarketModel::FellerCv(_) => "feller_cv",
        }
    }

    pub fn initial_state(&self) -> f64 {
        match self {
            MarketModel::Merton { r, lambda, sigma } => r + sigma * lambda,
            MarketModel::KimOmberg(p) => p.mu0,
            MarketModel::FellerCv(p) => p.v0,
        }
    }

    /// Market price of risk given the state variable.
    pub fn lambda(&self, state: f64) -> f64 {
        match self {
            MarketModel::Merton { lambda, .. } => *lambda,
            MarketModel::KimOmberg(_) => state,
            MarketModel::FellerCv(p) => p.lambda(state),
        }
    }

    pub fn rate(&self) -> f64 {
        match self {
            MarketModel::Merton { r, .. } => *r,
            _ => 0.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            MarketModel::Merton { sigma, .. } => *sigma,
            _ => 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feller() -> FellerCvParams {
        FellerCvParams {
            kappa: 2.0,
            theta: 0.04,
            beta: 0.3,
            rho: -0.5,
            v0: 0.04,
            c: [0.0, 0.0, 1.0, 0.0],
        }
    }

    #[test]
    fn feller_lambda_examples() {
        assert!((feller().lambda(0.04) - 0.2).abs() < 1e-15);
        let p = FellerCvParams { c: [1.0, 1.0, 0.0, 0.0], ..feller() };
        assert_eq!(p.lambda(0.0), 1.0);
        assert_eq!(feller().lambda(-0.01), 0.0);
    }

    #[test]
    fn validation() {
        assert!(MarketModel::Merton { r: -0.01, lambda: 0.3, sigma: 0.2 }.validate().is_err());
        assert!(MarketModel::Merton { r: 0.0, lambda: 0.3, sigma: 0.0 }.validate().is_err());
        assert!(MarketModel::FellerCv(feller()).validate().is_ok());
        let bad = FellerCvParams { c: [1.0, 0.0, 1.0, 0.0], ..feller() };
        assert!(bad.validate().is_err());
        let bad = FellerCvParams { rho: 1.5, ..feller() };
        assert!(bad.validate().is_err());
        assert!(!MarketModel::FellerCv(feller()).is_complete());
        assert!(MarketModel::Merton { r: 0.0, lambda: 0.3, sigma: 0.2 }.is_complete());
    }
}
