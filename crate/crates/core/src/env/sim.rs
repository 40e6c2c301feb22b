//! The stepped digital twin: global state, joint steps, and observations.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::port::{allocate_berths, PortRuntime};
use super::scenario::{PhysicsParams, RouteGraph, ScenarioConfig};
use super::vessel::{advance_vessel, Health, Location, VesselState, DEGRADE_PROB};
use super::weather::{WeatherModel, WeatherScenario};
use crate::error::{Error, Result};

/// Full simulator snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub t: usize,
    pub vessels: Vec<VesselState>,
    pub ports: Vec<PortRuntime>,
    /// Weather per edge for the upcoming step.
    pub weather: Vec<WeatherScenario>,
    pub cum_emissions: f64,
}

/// One vessel's command for a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselCommand {
    /// Commanded speed in knots.
    pub speed: f64,
    /// Candidate route index used if the vessel departs this step.
    pub route: usize,
}

impl VesselCommand {
    pub fn idle() -> Self {
        VesselCommand {
            speed: 0.0,
            route: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Per-vessel emissions booked this step.
    pub emissions: Vec<f64>,
    /// Per-vessel fuel booked this step.
    pub fuel: Vec<f64>,
    pub queue_hours_added: f64,
    pub arrivals_completed: u32,
    /// Weather that applied to each edge during this step.
    pub storm_active: Vec<bool>,
}

impl StepMetrics {
    pub fn total_emissions(&self) -> f64 {
        self.emissions.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Negated per-vessel step fuel.
    pub base_rewards: Vec<f64>,
    pub metrics: StepMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Low,
}

/// Fixed-length observation; masked entries hold 0 with `present = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

/// Run-level overrides applied on top of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: usize,
    pub p_storm: f64,
    pub mask_fraction: f64,
    /// Emission cap used for the remaining-cap feature; `None` reads as an
    /// untouched budget.
    pub c_max: Option<f64>,
}

pub const LOW_OBS_LEN: usize = 17;
pub const HIGH_OBS_LEN: usize = 14;

const FUEL_SCALE: f64 = 5.0;
const DIST_SCALE: f64 = 100.0;
const LEGS_SCALE: f64 = 4.0;

/// Zeroes `floor(fraction * len)` entries chosen uniformly without
/// replacement.
pub fn mask_components<R: Rng + ?Sized>(obs: &mut Observation, fraction: f64, rng: &mut R) {
    let len = obs.values.len();
    let k = ((fraction.clamp(0.0, 1.0) * len as f64).floor() as usize).min(len);
    if k == 0 {
        return;
    }
    for i in index::sample(rng, len, k) {
        obs.values[i] = 0.0;
        obs.present[i] = false;
    }
}

/// Seeded digital twin instance. One instance is driven by one caller.
#[derive(Debug, Clone)]
pub struct Simulator {
    graph: RouteGraph,
    scenario: ScenarioConfig,
    params: PhysicsParams,
    options: SimOptions,
    world_rng: ChaCha8Rng,
    obs_rngs: Vec<ChaCha8Rng>,
    state: GlobalState,
}

impl Simulator {
    /// Builds and resets a simulator using the scenario's own storm and
    /// masking parameters.
    pub fn new(scenario: &ScenarioConfig, horizon: usize, seed: u64) -> Result<Self> {
        let options = SimOptions {
            horizon,
            p_storm: scenario.p_storm,
            mask_fraction: scenario.mask_fraction,
            c_max: None,
        };
        Self::with_options(scenario, options, seed)
    }

    pub fn with_options(scenario: &ScenarioConfig, options: SimOptions, seed: u64) -> Result<Self> {
        scenario.validate()?;
        if !(0.0..=1.0).contains(&options.p_storm) {
            return Err(Error::config("p_storm", "outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&options.mask_fraction) {
            return Err(Error::config("mask_fraction", "outside [0, 1]"));
        }
        let graph = RouteGraph::from_scenario(scenario)?;
        let mut sim = Simulator {
            graph,
            scenario: scenario.clone(),
            params: scenario.physics(),
            options,
            world_rng: ChaCha8Rng::seed_from_u64(0),
            obs_rngs: Vec::new(),
            state: GlobalState {
                t: 0,
                vessels: Vec::new(),
                ports: Vec::new(),
                weather: Vec::new(),
                cum_emissions: 0.0,
            },
        };
        sim.reset(seed)?;
        Ok(sim)
    }

    /// Places every vessel at its start port and resamples step-0 weather.
    pub fn reset(&mut self, seed: u64) -> Result<&GlobalState> {
        self.world_rng = stream(seed, 0);
        let n = self.scenario.vessels.len();
        self.obs_rngs = (0..2 * n).map(|k| stream(seed, 1 + k as u64)).collect();
        let vessels: Vec<VesselState> = self
            .scenario
            .vessels
            .iter()
            .map(|v| VesselState::new(v.id, v.itinerary[0], v.itinerary[1..].to_vec()))
            .collect();
        let mut ports = Vec::with_capacity(self.graph.ports.len());
        for p in &self.graph.ports {
            let here: Vec<usize> = vessels
                .iter()
                .filter(|v| !v.retired && v.port() == Some(p.id))
                .map(|v| v.id)
                .collect();
            ports.push(allocate_berths(
                &PortRuntime::new(p.id, p.berth_capacity),
                &[],
                &here,
                0.0,
            )?);
        }
        let weather = self.sample_edge_weather();
        self.state = GlobalState {
            t: 0,
            vessels,
            ports,
            weather,
            cum_emissions: 0.0,
        };
        Ok(&self.state)
    }

    fn sample_edge_weather(&mut self) -> Vec<WeatherScenario> {
        let model = WeatherModel {
            p_storm: self.options.p_storm,
            p_moderate: 0.0,
        };
        (0..self.graph.edges.len())
            .map(|_| model.sample(&mut self.world_rng))
            .collect()
    }

    pub fn state(&self) -> &GlobalState {
        &self.state
    }

    pub fn graph(&self) -> &RouteGraph {
        &self.graph
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn options(&self) -> &SimOptions {
        &self.options
    }

    pub fn n_vessels(&self) -> usize {
        self.state.vessels.len()
    }

    pub fn done(&self) -> bool {
        self.state.t >= self.options.horizon
    }

    /// Whether `vessel` could leave port this step if commanded.
    pub fn can_depart(&self, vessel: usize) -> bool {
        let v = &self.state.vessels[vessel];
        match v.location {
            Location::AtPort(p) => {
                !v.retired && !v.itinerary.is_empty() && self.state.ports[p].is_berthed(v.id)
            }
            Location::OnEdge { .. } => false,
        }
    }

    /// Advances the world one step under `actions`, one command per vessel.
    pub fn step(&mut self, actions: &[VesselCommand]) -> Result<StepOutcome> {
        let n = self.state.vessels.len();
        if actions.len() != n {
            return Err(Error::Contract(format!(
                "expected {n} vessel commands, got {}",
                actions.len()
            )));
        }
        if self.done() {
            return Err(Error::Contract(format!(
                "step at t = {} beyond horizon",
                self.state.t
            )));
        }
        // Degradation draws happen for every vessel so the stream layout is
        // independent of fleet status.
        for v in self.state.vessels.iter_mut() {
            let u: f64 = self.world_rng.gen();
            if u < DEGRADE_PROB && !v.retired {
                v.health = Health::Degraded;
            }
        }

        let n_ports = self.state.ports.len();
        let mut departures: Vec<Vec<usize>> = vec![Vec::new(); n_ports];
        let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); n_ports];
        let mut fuel = vec![0.0; n];
        let mut emissions = vec![0.0; n];
        let mut arrivals_completed = 0;
        let storm_active = self
            .state
            .weather
            .iter()
            .map(WeatherScenario::is_storm)
            .collect();

        for (i, cmd) in actions.iter().enumerate() {
            let mut vessel = self.state.vessels[i].clone();
            let (speed, weather) = match vessel.location {
                _ if vessel.retired => (0.0, WeatherScenario::CALM),
                Location::AtPort(p) => {
                    if cmd.speed > 0.0 && self.can_depart(i) {
                        let dest = vessel.itinerary[0];
                        let plan = self
                            .graph
                            .route(p, dest, cmd.route)
                            .ok_or_else(|| {
                                Error::StateCorruption(format!("no route {p} -> {dest}"))
                            })?
                            .to_vec();
                        let w = self.state.weather[plan[0]];
                        vessel.plan = plan;
                        departures[p].push(i);
                        (cmd.speed, w)
                    } else {
                        if !(0.0..=self.params.v_max).contains(&cmd.speed) {
                            return Err(Error::Domain(format!(
                                "commanded speed {} out of range",
                                cmd.speed
                            )));
                        }
                        (0.0, WeatherScenario::CALM)
                    }
                }
                Location::OnEdge { edge, .. } => (cmd.speed, self.state.weather[edge]),
            };
            let adv = advance_vessel(&vessel, speed, &weather, &self.params, &self.graph)?;
            fuel[i] = adv.fuel;
            emissions[i] = adv.emissions;
            if let Some(port) = adv.arrived_at {
                arrivals_completed += 1;
                if !adv.vessel.retired {
                    arrivals[port].push(i);
                }
            }
            self.state.vessels[i] = adv.vessel;
        }

        let mut queue_hours_added = 0.0;
        for p in 0..n_ports {
            let before = self.state.ports[p].accumulated_queue_hours;
            let next = allocate_berths(
                &self.state.ports[p],
                &departures[p],
                &arrivals[p],
                self.params.dt,
            )?;
            queue_hours_added += next.accumulated_queue_hours - before;
            self.state.ports[p] = next;
        }

        self.state.weather = self.sample_edge_weather();
        self.state.cum_emissions = self.state.vessels.iter().map(|v| v.emissions).sum();
        self.state.t += 1;

        Ok(StepOutcome {
            base_rewards: fuel.iter().map(|f| -f).collect(),
            metrics: StepMetrics {
                emissions,
                fuel,
                queue_hours_added,
                arrivals_completed,
                storm_active,
            },
        })
    }

    fn remaining_cap_fraction(&self) -> f64 {
        match self.options.c_max {
            Some(c) if c > 0.0 => ((c - self.state.cum_emissions) / c).clamp(0.0, 1.0),
            _ => 1.0,
        }
    }

    fn time_fraction(&self) -> f64 {
        self.state.t as f64 / self.options.horizon.max(1) as f64
    }

    /// Edge whose weather matters to the vessel: the one it is on, or the
    /// first edge of its default route out of port.
    fn relevant_edge(&self, v: &VesselState) -> Option<usize> {
        match v.location {
            Location::OnEdge { edge, .. } => Some(edge),
            Location::AtPort(p) => v
                .itinerary
                .first()
                .and_then(|&d| self.graph.route(p, d, 0))
                .map(|r| r[0]),
        }
    }

    /// Unmasked feature vector for `agent` at `level`.
    pub fn features(&self, agent: usize, level: Level) -> Result<Vec<f64>> {
        let v = self
            .state
            .vessels
            .get(agent)
            .ok_or_else(|| Error::Contract(format!("unknown agent {agent}")))?;
        let n = self.state.vessels.len().max(1) as f64;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let (at_port, berthed, queued) = match v.location {
            Location::AtPort(p) if !v.retired => {
                let port = &self.state.ports[p];
                (true, port.is_berthed(v.id), port.is_queued(v.id))
            }
            _ => (false, false, false),
        };
        let mut f = Vec::with_capacity(LOW_OBS_LEN);
        match level {
            Level::Low => {
                let (progress, leg_left) = match v.location {
                    Location::OnEdge { edge, progress } => (
                        progress / self.graph.edge(edge).distance,
                        v.remaining_leg_distance(&self.graph),
                    ),
                    Location::AtPort(p) => (
                        0.0,
                        v.itinerary
                            .first()
                            .and_then(|&d| self.graph.route(p, d, 0))
                            .map(|r| self.graph.route_distance(r))
                            .unwrap_or(0.0),
                    ),
                };
                let dest = v.itinerary.first().copied();
                let (dest_queue, dest_occ) = dest
                    .map(|d| {
                        let port = &self.state.ports[d];
                        (
                            port.queue.len() as f64 / n,
                            port.occupied() as f64 / port.capacity as f64,
                        )
                    })
                    .unwrap_or((0.0, 0.0));
                let weather = self
                    .relevant_edge(v)
                    .map(|e| self.state.weather[e])
                    .unwrap_or(WeatherScenario::CALM);
                f.extend_from_slice(&[
                    v.speed / self.params.v_max,
                    v.fuel_used / FUEL_SCALE,
                    flag(at_port),
                    flag(berthed),
                    flag(queued),
                    progress,
                    leg_left / DIST_SCALE,
                    v.itinerary.len() as f64 / LEGS_SCALE,
                    flag(v.retired),
                    flag(v.health == Health::Degraded),
                    dest_queue,
                    dest_occ,
                ]);
                f.extend_from_slice(&weather.one_hot());
                f.push(self.remaining_cap_fraction());
                f.push(self.time_fraction());
                debug_assert_eq!(f.len(), LOW_OBS_LEN);
            }
            Level::High => {
                let mut options = [0.0; 3];
                if let (Location::AtPort(p), Some(&d)) = (v.location, v.itinerary.first()) {
                    for (slot, r) in options.iter_mut().zip(self.graph.route_options(p, d)) {
                        *slot = self.graph.route_distance(r) / DIST_SCALE;
                    }
                }
                let queued_total: usize = self.state.ports.iter().map(|p| p.queue.len()).sum();
                let full = self
                    .state
                    .ports
                    .iter()
                    .filter(|p| p.occupied() >= p.capacity as usize)
                    .count() as f64
                    / self.state.ports.len().max(1) as f64;
                let storms = self.state.weather.iter().filter(|w| w.is_storm()).count() as f64
                    / self.state.weather.len().max(1) as f64;
                f.extend_from_slice(&[
                    flag(at_port),
                    flag(berthed),
                    flag(queued),
                    flag(v.retired),
                    v.itinerary.len() as f64 / LEGS_SCALE,
                ]);
                f.extend_from_slice(&options);
                f.extend_from_slice(&[
                    queued_total as f64 / n,
                    full,
                    self.remaining_cap_fraction(),
                    self.time_fraction(),
                    v.fuel_used / FUEL_SCALE,
                    storms,
                ]);
                debug_assert_eq!(f.len(), HIGH_OBS_LEN);
            }
        }
        Ok(f)
    }

    /// Features for `agent` with the run's masking fraction applied from the
    /// agent's own stream.
    pub fn observe(&mut self, agent: usize, level: Level) -> Result<Observation> {
        let fraction = self.options.mask_fraction;
        self.observe_with(agent, level, fraction)
    }

    pub fn observe_with(
        &mut self,
        agent: usize,
        level: Level,
        mask_fraction: f64,
    ) -> Result<Observation> {
        let values = self.features(agent, level)?;
        let mut obs = Observation {
            present: vec![true; values.len()],
            values,
        };
        let k = 2 * agent
            + match level {
                Level::High => 0,
                Level::Low => 1,
            };
        mask_components(&mut obs, mask_fraction, &mut self.obs_rngs[k]);
        Ok(obs)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
