//! Per-episode KPIs and their aggregation across seeds.

use serde::{Deserialize, Serialize};

use crate::constraints::{violation_stats, ViolationReport};
use crate::env::StepMetrics;
use crate::error::{Error, Result};
use crate::fairness::{burden_balance, gini};
use crate::trainer::RewardComponents;

/// Episode summary. Reward fields are team returns: sums over agents and
/// steps, so that `reward_base == -emissions` when every burden is fuel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KPIRecord {
    pub episode: usize,
    /// Adjusted (shaped) return.
    pub reward_mean: f64,
    /// Base (unshaped) return.
    pub reward_base: f64,
    pub emissions: f64,
    pub fuel: f64,
    /// Gini of per-vessel fuel.
    pub gini: f64,
    /// Population variance of per-vessel fuel.
    pub fuel_variance: f64,
    /// Lightest over heaviest per-vessel fuel burden.
    pub burden_balance: f64,
    /// Completed port-to-port voyages.
    pub throughput: u32,
    pub queue_hours: f64,
    pub steps_over: u32,
    pub episode_over: bool,
    pub lambda: f64,
}

/// Raw series for one finished episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSeries<'a> {
    pub episode: usize,
    pub horizon: usize,
    pub steps: &'a [StepMetrics],
    /// Reward decomposition per step, per agent.
    pub rewards: &'a [Vec<RewardComponents>],
    /// Cumulative emissions after each step.
    pub cum_history: &'a [f64],
    pub vessel_fuel: &'a [f64],
    pub c_max: Option<f64>,
    pub lambda: f64,
}

pub fn episode_kpis(series: &EpisodeSeries<'_>) -> Result<KPIRecord> {
    let t = series.horizon;
    if series.steps.len() != t || series.rewards.len() != t || series.cum_history.len() != t {
        return Err(Error::Contract(format!(
            "incomplete episode: horizon {t}, {} steps, {} reward rows, {} cumulative entries",
            series.steps.len(),
            series.rewards.len(),
            series.cum_history.len()
        )));
    }
    if series.vessel_fuel.is_empty() {
        return Err(Error::Contract("no vessels in episode".into()));
    }
    let sum_rewards =
        |f: fn(&RewardComponents) -> f64| series.rewards.iter().flatten().map(f).sum::<f64>();
    let emissions: f64 = series.steps.iter().map(|s| s.total_emissions()).sum();
    let fuel: f64 = series.steps.iter().flat_map(|s| s.fuel.iter()).sum();
    let n = series.vessel_fuel.len() as f64;
    let mean_fuel = series.vessel_fuel.iter().sum::<f64>() / n;
    let fuel_variance = series
        .vessel_fuel
        .iter()
        .map(|f| (f - mean_fuel).powi(2))
        .sum::<f64>()
        / n;
    let report = match series.c_max {
        Some(c) => violation_stats(series.cum_history, c)?,
        None => ViolationReport::default(),
    };
    Ok(KPIRecord {
        episode: series.episode,
        reward_mean: sum_rewards(|r| r.adjusted),
        reward_base: sum_rewards(|r| r.base),
        emissions,
        fuel,
        gini: gini(series.vessel_fuel)?,
        fuel_variance,
        burden_balance: burden_balance(series.vessel_fuel)?,
        throughput: series.steps.iter().map(|s| s.arrivals_completed).sum(),
        queue_hours: series.steps.iter().map(|s| s.queue_hours_added).sum(),
        steps_over: report.steps_over,
        episode_over: report.episode_over,
        lambda: series.lambda,
    })
}

/// Mean and population standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Result<Stat> {
        if values.is_empty() {
            return Err(Error::Contract("statistic over zero seeds".into()));
        }
        let n = values.len() as f64;
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = (values.iter().sum::<f64>() / n).clamp(lo, hi);
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Ok(Stat {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub seeds: usize,
    pub reward_mean: Stat,
    pub reward_base: Stat,
    pub emissions: Stat,
    pub fuel: Stat,
    pub gini: Stat,
    pub fuel_variance: Stat,
    pub throughput: Stat,
    pub queue_hours: Stat,
    pub steps_over: Stat,
    /// Fraction of seeds whose episode ended over the cap.
    pub episode_over: Stat,
    pub lambda: Stat,
}

/// Per-episode statistics across seeds. Every seed must have the same
/// number of episodes.
pub fn aggregate_curves(by_seed: &[Vec<KPIRecord>]) -> Result<Vec<CurvePoint>> {
    let first = by_seed
        .first()
        .ok_or_else(|| Error::Contract("no seeds to aggregate".into()))?;
    if let Some(bad) = by_seed.iter().find(|s| s.len() != first.len()) {
        return Err(Error::Contract(format!(
            "ragged seeds: {} episodes vs {}",
            bad.len(),
            first.len()
        )));
    }
    (0..first.len())
        .map(|e| {
            let col = |f: fn(&KPIRecord) -> f64| -> Result<Stat> {
                let v: Vec<f64> = by_seed.iter().map(|s| f(&s[e])).collect();
                Stat::of(&v)
            };
            Ok(CurvePoint {
                episode: first[e].episode,
                seeds: by_seed.len(),
                reward_mean: col(|r| r.reward_mean)?,
                reward_base: col(|r| r.reward_base)?,
                emissions: col(|r| r.emissions)?,
                fuel: col(|r| r.fuel)?,
                gini: col(|r| r.gini)?,
                fuel_variance: col(|r| r.fuel_variance)?,
                throughput: col(|r| r.throughput as f64)?,
                queue_hours: col(|r| r.queue_hours)?,
                steps_over: col(|r| r.steps_over as f64)?,
                episode_over: col(|r| if r.episode_over { 1.0 } else { 0.0 })?,
                lambda: col(|r| r.lambda)?,
            })
        })
        .collect()
}

/// Mean of `f` over the last `window` records (or all, if fewer).
pub fn window_mean(
    records: &[KPIRecord],
    window: usize,
    f: impl Fn(&KPIRecord) -> f64,
) -> Result<f64> {
    if records.is_empty() || window == 0 {
        return Err(Error::Contract("empty window".into()));
    }
    let tail = &records[records.len().saturating_sub(window)..];
    Ok(tail.iter().map(f).sum::<f64>() / tail.len() as f64)
}
