//! Primal-dual enforcement of the global emission cap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    /// Update only while cumulative emissions exceed the cap.
    #[default]
    CapOnly,
    /// Projected signed update; shrinks the multiplier while under the cap.
    Signed,
}

/// Lagrange multiplier for the emission cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub alpha_lambda: f64,
    /// Per-episode cumulative emission cap, tonnes.
    pub c_max: f64,
    pub mode: DualMode,
}

impl DualState {
    pub fn new(c_max: f64, alpha_lambda: f64, mode: DualMode) -> Result<Self> {
        if !(c_max.is_finite() && c_max > 0.0) {
            return Err(Error::config("c_max", format!("{c_max} must be positive")));
        }
        if !(alpha_lambda.is_finite() && alpha_lambda >= 0.0) {
            return Err(Error::config(
                "alpha_lambda",
                format!("{alpha_lambda} must be non-negative"),
            ));
        }
        Ok(DualState {
            lambda: 0.0,
            alpha_lambda,
            c_max,
            mode,
        })
    }
}

/// One dual step against the current cumulative emissions.
pub fn dual_update(dual: &DualState, cum_emissions: f64) -> DualState {
    let overshoot = cum_emissions - dual.c_max;
    let lambda = match dual.mode {
        DualMode::CapOnly if overshoot > 0.0 => dual.lambda + dual.alpha_lambda * overshoot,
        DualMode::CapOnly => dual.lambda,
        DualMode::Signed => (dual.lambda + dual.alpha_lambda * overshoot).max(0.0),
    };
    DualState { lambda, ..*dual }
}

/// Per-agent penalty `-lambda * e_i`.
pub fn constraint_penalty(dual: &DualState, e_i: f64) -> Result<f64> {
    if !(e_i >= 0.0) {
        return Err(Error::Domain(format!("negative step emissions {e_i}")));
    }
    if dual.lambda == 0.0 || e_i == 0.0 {
        return Ok(0.0);
    }
    Ok(-dual.lambda * e_i)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViolationReport {
    pub steps_over: u32,
    pub max_overshoot: f64,
    pub episode_over: bool,
}

/// Counts strict exceedances of `c_max` in a cumulative emission history.
pub fn violation_stats(cum_history: &[f64], c_max: f64) -> Result<ViolationReport> {
    if let Some(w) = cum_history.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::Contract(format!(
            "cumulative history decreases from {} to {}",
            w[0], w[1]
        )));
    }
    let mut report = ViolationReport::default();
    for &c in cum_history {
        if c > c_max {
            report.steps_over += 1;
            report.max_overshoot = report.max_overshoot.max(c - c_max);
        }
    }
    report.episode_over = cum_history.last().is_some_and(|&c| c > c_max);
    Ok(report)
}
