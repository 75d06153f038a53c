//! Shrinkage pre-test estimators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SptMode {
    /// `λθ₀ + (1-λ)·θ̂·I(W < c)`: rejection leaves only `λθ₀`.
    #[default]
    Paper,
    /// Shrink on acceptance, keep `θ̂` on rejection.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SptConfig {
    pub theta0_alpha: f64,
    pub theta0_beta: f64,
    pub lambda: f64,
    pub test_level: f64,
    pub mode: SptMode,
}

impl Default for SptConfig {
    fn default() -> Self {
        Self { theta0_alpha: 0.7, theta0_beta: 1.7, lambda: 0.5, test_level: 0.05, mode: SptMode::Paper }
    }
}

impl SptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta0_alpha > 0.0 && self.theta0_beta > 0.0) {
            return Err(Error::InvalidParameter("prior guesses must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.test_level > 0.0 && self.test_level < 1.0) {
            return Err(Error::InvalidParameter(format!("test level must lie in (0, 1), got {}", self.test_level)));
        }
        Ok(())
    }

    /// Upper `test_level` quantile of χ²₁.
    pub fn critical_value(&self) -> f64 {
        ChiSquared::new(1.0).expect("one degree of freedom").inverse_cdf(1.0 - self.test_level)
    }
}

/// `(estimate - theta0)² / variance`.
pub fn wald_statistic(estimate: f64, theta0: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!("variance must be positive, got {variance}")));
    }
    Ok((estimate - theta0).powi(2) / variance)
}

pub fn spt_estimate(estimate: f64, theta0: f64, w: f64, cfg: &SptConfig) -> f64 {
    let accept = w < cfg.critical_value();
    let lam = cfg.lambda;
    match (cfg.mode, accept) {
        (_, true) => lam * theta0 + (1.0 - lam) * estimate,
        (SptMode::Paper, false) => lam * theta0,
        (SptMode::Conventional, false) => estimate,
    }
}
