//! Fairness metrics over per-agent burdens and the reward-shaping terms
//! built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gini coefficient `sum_ij |c_i - c_j| / (2 n^2 mean)`; zero for an
/// all-zero vector.
///
/// Uses the sorted closed form, O(n log n).
pub fn gini(burdens: &[f64]) -> Result<f64> {
    if burdens.is_empty() {
        return Err(Error::Domain("gini of an empty vector".into()));
    }
    if let Some(b) = burdens.iter().find(|b| !(**b >= 0.0)) {
        return Err(Error::Domain(format!("negative burden {b}")));
    }
    let n = burdens.len() as f64;
    let total: f64 = burdens.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let mut sorted = burdens.to_vec();
    sorted.sort_by(f64::total_cmp);
    // sum_ij |x_i - x_j| = 2 * sum_k (2k - n + 1) x_(k), k zero-based.
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (2.0 * k as f64 - n + 1.0) * x)
        .sum();
    Ok((weighted / (n * total)).max(0.0))
}

/// `min_i R_i / r_optimal`.
pub fn maxmin_ratio(rewards: &[f64], r_optimal: f64) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::Domain("max-min ratio of an empty vector".into()));
    }
    if r_optimal == 0.0 {
        return Err(Error::Domain("r_optimal must be non-zero".into()));
    }
    Ok(rewards
        .iter()
        .map(|r| r / r_optimal)
        .fold(f64::INFINITY, f64::min))
}

/// Best-agent ratio over costs: `min_i (min_j c_j) / c_i`, in (0, 1].
///
/// The cost-side counterpart of [`maxmin_ratio`]; 1 means every agent bears
/// the same burden.
pub fn burden_balance(burdens: &[f64]) -> Result<f64> {
    if burdens.is_empty() {
        return Err(Error::Domain("burden balance of an empty vector".into()));
    }
    let lo = burdens.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = burdens.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo < 0.0 {
        return Err(Error::Domain(format!("negative burden {lo}")));
    }
    if hi == 0.0 {
        return Ok(1.0);
    }
    Ok(lo / hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMode {
    /// Shared penalty proportional to the Gini coefficient of burdens.
    #[default]
    Gini,
    /// Per-agent penalty on the shortfall from the best agent's reward.
    Maxmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessConfig {
    pub mode: FairnessMode,
    pub weight: f64,
    pub delta_threshold: f64,
}

impl Default for FairnessConfig {
    fn default() -> Self {
        FairnessConfig {
            mode: FairnessMode::Gini,
            weight: 0.1,
            delta_threshold: 0.8,
        }
    }
}

impl FairnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::config("fairness.weight", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.delta_threshold) {
            return Err(Error::config(
                "fairness.delta_threshold",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Cumulative per-agent burdens (fuel by default).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BurdenLedger {
    burdens: Vec<f64>,
}

impl BurdenLedger {
    pub fn new(n_agents: usize) -> Self {
        BurdenLedger {
            burdens: vec![0.0; n_agents],
        }
    }

    pub fn record(&mut self, agent: usize, amount: f64) -> Result<()> {
        if !(amount >= 0.0) {
            return Err(Error::Domain(format!(
                "burden increment {amount} is negative"
            )));
        }
        let slot = self
            .burdens
            .get_mut(agent)
            .ok_or_else(|| Error::Contract(format!("unknown agent {agent}")))?;
        *slot += amount;
        Ok(())
    }

    pub fn burdens(&self) -> &[f64] {
        &self.burdens
    }

    pub fn reset(&mut self) {
        self.burdens.iter_mut().for_each(|b| *b = 0.0);
    }
}

/// Inputs to the fairness term: burdens for the shared Gini penalty, agent
/// rewards for the max-min shortfall penalty.
#[derive(Debug, Clone, Copy)]
pub enum FairnessInput<'a> {
    Burdens(&'a [f64]),
    Rewards(&'a [f64]),
}

/// Fairness shaping term for every agent.
pub fn fairness_terms(config: &FairnessConfig, input: FairnessInput<'_>) -> Result<Vec<f64>> {
    let values = match input {
        FairnessInput::Burdens(v) | FairnessInput::Rewards(v) => v,
    };
    if config.weight == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    match (config.mode, input) {
        (FairnessMode::Gini, FairnessInput::Burdens(b)) => {
            let g = gini(b)?;
            Ok(vec![-config.weight * g; b.len()])
        }
        (FairnessMode::Maxmin, FairnessInput::Rewards(r)) => {
            if r.is_empty() {
                return Err(Error::Domain("no agent rewards".into()));
            }
            let best = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(r.iter()
                .map(|ri| -config.weight * (best - ri).max(0.0))
                .collect())
        }
        (mode, _) => Err(Error::config(
            "fairness.mode",
            format!("{mode:?} mode received the wrong kind of input"),
        )),
    }
}

/// Single-agent view of [`fairness_terms`].
pub fn fairness_term(
    config: &FairnessConfig,
    input: FairnessInput<'_>,
    agent: usize,
) -> Result<f64> {
    fairness_terms(config, input)?
        .get(agent)
        .copied()
        .ok_or_else(|| Error::Contract(format!("unknown agent {agent}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_gini(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        if mean == 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for a in x {
            for b in x {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn gini_unit_values() {
        assert_eq!(gini(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert!((gini(&[1.0, 2.0, 3.0]).unwrap() - 8.0 / 36.0).abs() < 1e-12);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(gini(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn maxmin_values() {
        assert_eq!(maxmin_ratio(&[10.0, 10.0], 10.0).unwrap(), 1.0);
        assert_eq!(maxmin_ratio(&[5.0, 10.0], 10.0).unwrap(), 0.5);
        assert_eq!(maxmin_ratio(&[10.0], 10.0).unwrap(), 1.0);
        assert!(maxmin_ratio(&[], 10.0).is_err());
    }

    #[test]
    fn fairness_term_values() {
        let gini_cfg = FairnessConfig {
            weight: 0.1,
            ..Default::default()
        };
        let t = fairness_terms(&gini_cfg, FairnessInput::Burdens(&[1.0, 2.0, 3.0])).unwrap();
        for d in t {
            assert!((d + 0.1 * 8.0 / 36.0).abs() < 1e-12);
        }
        let mm = FairnessConfig {
            mode: FairnessMode::Maxmin,
            weight: 0.1,
            delta_threshold: 0.8,
        };
        let d = fairness_term(&mm, FairnessInput::Rewards(&[10.0, 7.0]), 1).unwrap();
        assert!((d + 0.3).abs() < 1e-12);
        assert!((7.0 + d - 6.7).abs() < 1e-12);
        assert_eq!(
            fairness_term(&mm, FairnessInput::Rewards(&[10.0, 7.0]), 0).unwrap(),
            0.0
        );
        let off = FairnessConfig { weight: 0.0, ..mm };
        assert_eq!(
            fairness_term(&off, FairnessInput::Rewards(&[10.0, 7.0]), 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn mismatched_input_is_config_error() {
        let cfg = FairnessConfig::default();
        assert!(matches!(
            fairness_terms(&cfg, FairnessInput::Rewards(&[1.0])),
            Err(Error::Config { .. })
        ));
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_oracle(x in prop::collection::vec(0.0f64..100.0, 1..40)) {
            prop_assert!((gini(&x).unwrap() - brute_gini(&x)).abs() < 1e-12);
        }

        #[test]
        fn gini_is_scale_invariant(x in prop::collection::vec(0.0f64..100.0, 1..40), k in 0.01f64..100.0) {
            let scaled: Vec<f64> = x.iter().map(|v| v * k).collect();
            prop_assert!((gini(&x).unwrap() - gini(&scaled).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn gini_is_bounded(x in prop::collection::vec(0.0f64..100.0, 1..40)) {
            let g = gini(&x).unwrap();
            let n = x.len() as f64;
            prop_assert!(g >= 0.0 && g <= 1.0 - 1.0 / n + 1e-12);
            let equal = x.iter().all(|v| *v == x[0]);
            if equal {
                prop_assert_eq!(g, 0.0);
            } else if x.iter().sum::<f64>() > 0.0 {
                prop_assert!(g > 0.0);
            }
        }

        #[test]
        fn best_agent_has_no_shortfall(r in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let cfg = FairnessConfig { mode: FairnessMode::Maxmin, weight: 0.5, delta_threshold: 0.8 };
            let t = fairness_terms(&cfg, FairnessInput::Rewards(&r)).unwrap();
            let best = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (ri, ti) in r.iter().zip(t) {
                if *ri == best {
                    prop_assert_eq!(ti, 0.0);
                }
            }
        }
    }
}
