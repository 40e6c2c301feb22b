use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherLabel {
    Calm,
    Moderate,
    Storm,
}

/// Sea state on one edge for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherScenario {
    pub label: WeatherLabel,
    /// Multiplier on commanded speed, in (0, 1].
    pub speed_mult: f64,
    /// Multiplier on sailing fuel burn, >= 1.
    pub fuel_mult: f64,
}

impl WeatherScenario {
    pub const CALM: WeatherScenario = WeatherScenario {
        label: WeatherLabel::Calm,
        speed_mult: 1.0,
        fuel_mult: 1.0,
    };
    pub const MODERATE: WeatherScenario = WeatherScenario {
        label: WeatherLabel::Moderate,
        speed_mult: 0.85,
        fuel_mult: 1.15,
    };
    pub const STORM: WeatherScenario = WeatherScenario {
        label: WeatherLabel::Storm,
        speed_mult: 0.7,
        fuel_mult: 1.3,
    };

    pub fn is_storm(&self) -> bool {
        self.label == WeatherLabel::Storm
    }

    /// One-hot over (calm, moderate, storm).
    pub fn one_hot(&self) -> [f64; 3] {
        match self.label {
            WeatherLabel::Calm => [1.0, 0.0, 0.0],
            WeatherLabel::Moderate => [0.0, 1.0, 0.0],
            WeatherLabel::Storm => [0.0, 0.0, 1.0],
        }
    }
}

/// Three-point weather distribution. `p_moderate` is zero unless a caller
/// opts in.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeatherModel {
    pub p_storm: f64,
    pub p_moderate: f64,
}

impl WeatherModel {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeatherScenario {
        let u: f64 = rng.gen();
        if u < self.p_storm {
            WeatherScenario::STORM
        } else if u < self.p_storm + self.p_moderate {
            WeatherScenario::MODERATE
        } else {
            WeatherScenario::CALM
        }
    }
}

/// Storm with probability `p_storm`, calm otherwise.
pub fn sample_weather<R: Rng + ?Sized>(rng: &mut R, p_storm: f64) -> WeatherScenario {
    WeatherModel {
        p_storm,
        p_moderate: 0.0,
    }
    .sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            assert_eq!(sample_weather(&mut rng, 0.0), WeatherScenario::CALM);
            assert_eq!(sample_weather(&mut rng, 1.0), WeatherScenario::STORM);
        }
    }

    #[test]
    fn storm_frequency_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let storms = (0..10_000)
            .filter(|_| sample_weather(&mut rng, 0.2).is_storm())
            .count();
        let frac = storms as f64 / 10_000.0;
        assert!((frac - 0.2).abs() <= 0.01, "storm fraction {frac}");
    }

    #[test]
    #[allow(clippy::assertions_on_constants)]
    fn multiplier_invariants() {
        assert_eq!(
            (
                WeatherScenario::CALM.speed_mult,
                WeatherScenario::CALM.fuel_mult
            ),
            (1.0, 1.0)
        );
        assert!(WeatherScenario::STORM.speed_mult < 1.0);
        assert!(WeatherScenario::STORM.fuel_mult > 1.0);
        let m = WeatherModel {
            p_storm: 0.2,
            p_moderate: 0.3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let moderate = (0..10_000)
            .filter(|_| m.sample(&mut rng).label == WeatherLabel::Moderate)
            .count();
        assert!((moderate as f64 / 10_000.0 - 0.3).abs() < 0.02);
    }
}
