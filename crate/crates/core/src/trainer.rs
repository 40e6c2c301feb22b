//! Training loop: hierarchical rollouts, reward shaping, dual updates and
//! policy updates, plus the flat and centralized baseline modes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{constraint_penalty, dual_update, DualMode, DualState};
use crate::env::{
    Level, ScenarioConfig, SimOptions, Simulator, StepMetrics, VesselCommand, HIGH_OBS_LEN,
    LOW_OBS_LEN, SPEED_LEVELS,
};
use crate::error::{Error, Result};
use crate::fairness::{fairness_terms, BurdenLedger, FairnessConfig, FairnessInput, FairnessMode};
use crate::learner::{build_batch, ppo_update, PPOHyper, Trajectory, Transition, UpdateStats};
use crate::metrics::{episode_kpis, EpisodeSeries, KPIRecord};
use crate::nn::{Adam, Layout, Mlp};
use crate::policy::{
    act, encode_observation, init_policy, ActMode, ActionMask, HighDirective, BUDGET_FRACTIONS,
    HIDDEN, HIGH_ACTIONS, HIGH_LEVEL_CADENCE, LOW_ACTIONS, ROUTE_CHOICES,
};

/// One agent's reward at one step, kept decomposed for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    /// Negated fuel.
    pub base: f64,
    /// `-lambda * e_i`.
    pub constraint: f64,
    pub fairness: f64,
    pub adjusted: f64,
}

impl RewardComponents {
    pub fn new(base: f64, constraint: f64, fairness: f64) -> Self {
        RewardComponents {
            base,
            constraint,
            fairness,
            adjusted: base + constraint + fairness,
        }
    }

    /// Whether `adjusted` is exactly the sum of its parts.
    pub fn is_consistent(&self) -> bool {
        self.adjusted == self.base + self.constraint + self.fairness
    }
}

/// Combines base rewards, the constraint penalty and the fairness term per
/// agent. `dual = None` disables the constraint term.
pub fn shape_rewards(
    base: &[f64],
    dual: Option<&DualState>,
    emissions: &[f64],
    fairness: &[f64],
) -> Result<Vec<RewardComponents>> {
    if base.len() != emissions.len() || base.len() != fairness.len() {
        return Err(Error::Contract(format!(
            "misaligned shaping inputs: {} base, {} emissions, {} fairness",
            base.len(),
            emissions.len(),
            fairness.len()
        )));
    }
    base.iter()
        .zip(emissions)
        .zip(fairness)
        .map(|((&b, &e), &d)| {
            let c = match dual {
                Some(dual) => constraint_penalty(dual, e)?,
                None => 0.0,
            };
            Ok(RewardComponents::new(b, c, d))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessTiming {
    /// Episode-level term, added to every step reward at episode end.
    #[default]
    Offline,
    /// Term recomputed from running totals after every step.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub cap_enabled: bool,
    /// Per-episode emission cap, tonnes.
    pub c_max: f64,
    pub alpha_lambda: f64,
    pub dual_mode: DualMode,
    /// Carry the multiplier from one episode into the next.
    pub lambda_persist: bool,
    pub fairness_enabled: bool,
    pub fairness: FairnessConfig,
    pub fairness_timing: FairnessTiming,
    pub storms_enabled: bool,
    /// Storm probability per edge and step when storms are enabled.
    pub p_storm: f64,
    /// Fraction of observation entries hidden from the agents.
    pub mask_fraction: f64,
    pub hierarchy_enabled: bool,
    /// One policy over all agents' concatenated observations.
    pub centralized_baseline: bool,
    pub episodes: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Episodes collected per policy update.
    pub update_every: usize,
    pub ppo: PPOHyper,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cap_enabled: false,
            c_max: 800.0,
            alpha_lambda: 0.005,
            dual_mode: DualMode::CapOnly,
            lambda_persist: true,
            fairness_enabled: false,
            fairness: FairnessConfig::default(),
            fairness_timing: FairnessTiming::Offline,
            storms_enabled: false,
            p_storm: 0.2,
            mask_fraction: 0.0,
            hierarchy_enabled: true,
            centralized_baseline: false,
            episodes: 1200,
            horizon: 50,
            seeds: vec![1, 2, 3],
            update_every: 1,
            ppo: PPOHyper::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be >= 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::config(
                "mask_fraction",
                format!("{} outside [0, 1]", self.mask_fraction),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_storm) {
            return Err(Error::config(
                "p_storm",
                format!("{} outside [0, 1]", self.p_storm),
            ));
        }
        if self.cap_enabled && !(self.c_max.is_finite() && self.c_max > 0.0) {
            return Err(Error::config("c_max", "must be positive"));
        }
        if !(self.alpha_lambda.is_finite() && self.alpha_lambda >= 0.0) {
            return Err(Error::config("alpha_lambda", "must be >= 0"));
        }
        if self.centralized_baseline && self.hierarchy_enabled {
            return Err(Error::config(
                "centralized_baseline",
                "the centralized baseline cannot be combined with the hierarchy",
            ));
        }
        if self.update_every == 0 {
            return Err(Error::config("update_every", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        self.fairness.validate()?;
        self.ppo.validate()
    }

    pub fn policy_kind(&self) -> PolicyKind {
        if self.centralized_baseline {
            PolicyKind::Centralized
        } else if self.hierarchy_enabled {
            PolicyKind::Hierarchical
        } else {
            PolicyKind::Flat
        }
    }

    /// Simulator options implied by this run.
    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            horizon: self.horizon,
            p_storm: if self.storms_enabled {
                self.p_storm
            } else {
                0.0
            },
            mask_fraction: self.mask_fraction,
            c_max: self.cap_enabled.then_some(self.c_max),
        }
    }

    fn act_mode(&self, episode: usize) -> ActMode {
        match self.ppo.exploration.epsilon(episode) {
            Some(eps) => ActMode::EpsilonGreedy(eps),
            None => ActMode::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Strategic and operational policies, each shared across vessels.
    Hierarchical,
    /// Operational policy only, with unrestricted directives.
    Flat,
    /// One policy emitting every vessel's speed through factorized heads.
    Centralized,
}

/// Directive features appended to the operational input.
const DIRECTIVE_FEATURES: usize = 4;

pub fn low_input_len(kind: PolicyKind, n_agents: usize) -> usize {
    match kind {
        PolicyKind::Centralized => n_agents * 2 * LOW_OBS_LEN,
        _ => 2 * LOW_OBS_LEN + n_agents + DIRECTIVE_FEATURES,
    }
}

pub fn high_input_len(n_agents: usize) -> usize {
    2 * HIGH_OBS_LEN + n_agents
}

/// The trainable policies of one run and their optimizer state.
#[derive(Debug, Clone)]
pub struct Agents {
    pub kind: PolicyKind,
    pub low: Mlp,
    pub high: Option<Mlp>,
    low_adam: Adam,
    high_adam: Option<Adam>,
}

impl Agents {
    pub fn new(kind: PolicyKind, n_agents: usize, seed: u64) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::config("vessels", "at least one vessel is required"));
        }
        let low_heads = match kind {
            PolicyKind::Centralized => vec![LOW_ACTIONS; n_agents],
            _ => vec![LOW_ACTIONS],
        };
        let low = init_policy(
            Layout::new(low_input_len(kind, n_agents), HIDDEN, low_heads)?,
            derive_seed(seed, 1),
        );
        let high = match kind {
            PolicyKind::Hierarchical => Some(init_policy(
                Layout::new(high_input_len(n_agents), HIDDEN, vec![HIGH_ACTIONS])?,
                derive_seed(seed, 2),
            )),
            _ => None,
        };
        Ok(Agents {
            kind,
            low_adam: Adam::new(low.params.len()),
            high_adam: high.as_ref().map(|h| Adam::new(h.params.len())),
            low,
            high,
        })
    }

    /// One update of each policy from the collected trajectories.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        low: &[Trajectory],
        high: &[Trajectory],
        hyper: &PPOHyper,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let batch = build_batch(low, hyper)?;
        let stats = if batch.is_empty() {
            UpdateStats::default()
        } else {
            ppo_update(&mut self.low, &mut self.low_adam, &batch, hyper, rng)?
        };
        if let (Some(net), Some(adam)) = (self.high.as_mut(), self.high_adam.as_mut()) {
            let batch = build_batch(high, hyper)?;
            if !batch.is_empty() {
                ppo_update(net, adam, &batch, hyper, rng)?;
            }
        }
        Ok(stats)
    }
}

fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed_0000 + salt);
    rng.gen()
}

/// Environment seed for one episode of a run.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0xe915_0000_0000 + episode as u64);
    rng.gen()
}

fn one_hot(i: usize, n: usize) -> Vec<f64> {
    (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
}

/// Counters checked while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Audit {
    /// Operational actions checked against their directive mask.
    pub low_actions_checked: u64,
    /// Operational actions found outside their directive mask.
    pub mask_violations: u64,
    /// Reward decompositions checked.
    pub rewards_checked: u64,
    /// Decompositions where adjusted differed from the sum of its parts.
    pub decomposition_mismatches: u64,
}

impl Audit {
    fn merge(&mut self, other: &Audit) {
        self.low_actions_checked += other.low_actions_checked;
        self.mask_violations += other.mask_violations;
        self.rewards_checked += other.rewards_checked;
        self.decomposition_mismatches += other.decomposition_mismatches;
    }
}

/// Everything one episode produced.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    /// One per agent, or a single joint trajectory in centralized mode.
    pub low: Vec<Trajectory>,
    /// One per agent in hierarchical mode; empty otherwise.
    pub high: Vec<Trajectory>,
    /// Reward decomposition per step, per agent.
    pub rewards: Vec<Vec<RewardComponents>>,
    pub steps: Vec<StepMetrics>,
    pub cum_history: Vec<f64>,
    pub kpi: KPIRecord,
    pub dual: Option<DualState>,
    /// Smallest multiplier held at any step of the episode.
    pub lambda_min: f64,
    pub audit: Audit,
}

fn fairness_vector(config: &RunConfig, ledger: &BurdenLedger, returns: &[f64]) -> Result<Vec<f64>> {
    if !config.fairness_enabled {
        return Ok(vec![0.0; returns.len()]);
    }
    let input = match config.fairness.mode {
        FairnessMode::Gini => FairnessInput::Burdens(ledger.burdens()),
        FairnessMode::Maxmin => FairnessInput::Rewards(returns),
    };
    fairness_terms(&config.fairness, input)
}

/// Operational mask imposed by the world: vessels that cannot move this
/// step may only stop.
fn env_mask(sim: &Simulator, agent: usize) -> ActionMask {
    let v = &sim.state().vessels[agent];
    let stuck = v.retired || (v.port().is_some() && !sim.can_depart(agent));
    if stuck {
        ActionMask::only_first(LOW_ACTIONS)
    } else {
        ActionMask::all(LOW_ACTIONS)
    }
}

fn directive_features(d: &HighDirective, t: usize, v_max: f64) -> [f64; DIRECTIVE_FEATURES] {
    [
        d.budget_fraction,
        d.route_choice as f64 / (ROUTE_CHOICES - 1) as f64,
        d.feasible_speed_cap / v_max,
        (HIGH_LEVEL_CADENCE - t % HIGH_LEVEL_CADENCE) as f64 / HIGH_LEVEL_CADENCE as f64,
    ]
}

/// Runs one episode of `config.horizon` steps.
///
/// Strategic decisions refresh every [`HIGH_LEVEL_CADENCE`] steps; speeds
/// are chosen every step inside the directive mask. The dual variable is
/// updated after every step.
pub fn run_episode<R: Rng + ?Sized>(
    sim: &mut Simulator,
    agents: &Agents,
    dual: Option<DualState>,
    config: &RunConfig,
    episode: usize,
    env_seed: u64,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    sim.reset(env_seed)?;
    let n = sim.n_vessels();
    let horizon = config.horizon;
    let params = *sim.params();
    let mode = config.act_mode(episode);
    let window = HIGH_LEVEL_CADENCE as f64 * params.dt;
    let mut dual = dual;
    let mut lambda_min = dual.map_or(0.0, |d| d.lambda);
    let mut audit = Audit::default();
    let mut low = vec![
        Trajectory::default();
        if agents.kind == PolicyKind::Centralized {
            1
        } else {
            n
        }
    ];
    let mut high = vec![Trajectory::default(); if agents.high.is_some() { n } else { 0 }];
    let unrestricted = HighDirective::unrestricted(&params);
    let mut directives = vec![unrestricted.clone(); n];
    let mut rewards = Vec::with_capacity(horizon);
    let mut steps = Vec::with_capacity(horizon);
    let mut cum_history = Vec::with_capacity(horizon);
    let mut ledger = BurdenLedger::new(n);
    let mut returns = vec![0.0; n];

    for t in 0..horizon {
        if let (Some(net), true) = (agents.high.as_ref(), t % HIGH_LEVEL_CADENCE == 0) {
            let state = sim.state();
            let active = state.vessels.iter().filter(|v| !v.retired).count().max(1) as f64;
            let share = if config.cap_enabled {
                (config.c_max - state.cum_emissions).max(0.0) / active / params.emission_factor
            } else {
                f64::INFINITY
            };
            let masks = [ActionMask::all(HIGH_ACTIONS)];
            for i in 0..n {
                let obs = sim.observe(i, Level::High)?;
                let input = encode_observation(&obs, &one_hot(i, n));
                let out = act(Level::High, net, &input, &masks, None, mode, rng)?;
                let a = out.actions[0];
                directives[i] = if config.cap_enabled {
                    HighDirective::from_action(a, share, window, &params)?
                } else {
                    HighDirective {
                        route_choice: a / BUDGET_FRACTIONS.len(),
                        budget_fraction: BUDGET_FRACTIONS[a % BUDGET_FRACTIONS.len()],
                        ..unrestricted.clone()
                    }
                };
                high[i].steps.push(Transition {
                    input,
                    masks: out.masks,
                    actions: out.actions,
                    log_prob: out.log_prob,
                    value: out.value,
                    reward: 0.0,
                    done: false,
                });
            }
        }

        let env_masks: Vec<ActionMask> = (0..n).map(|i| env_mask(sim, i)).collect();
        let mut speeds = vec![0usize; n];
        if agents.kind == PolicyKind::Centralized {
            let mut input = Vec::with_capacity(agents.low.layout.input);
            for i in 0..n {
                input.extend(encode_observation(&sim.observe(i, Level::Low)?, &[]));
            }
            let out = act(
                Level::Low,
                &agents.low,
                &input,
                &env_masks,
                Some(&unrestricted),
                mode,
                rng,
            )?;
            for (i, &a) in out.actions.iter().enumerate() {
                audit.low_actions_checked += 1;
                if !out.masks[i].permits(a) {
                    audit.mask_violations += 1;
                }
                speeds[i] = a;
            }
            low[0].steps.push(Transition {
                input,
                masks: out.masks,
                actions: out.actions,
                log_prob: out.log_prob,
                value: out.value,
                reward: 0.0,
                done: false,
            });
        } else {
            for i in 0..n {
                let obs = sim.observe(i, Level::Low)?;
                let mut extras = one_hot(i, n);
                extras.extend(directive_features(&directives[i], t, params.v_max));
                let input = encode_observation(&obs, &extras);
                let masks = [env_masks[i].clone()];
                let out = act(
                    Level::Low,
                    &agents.low,
                    &input,
                    &masks,
                    Some(&directives[i]),
                    mode,
                    rng,
                )?;
                let a = out.actions[0];
                audit.low_actions_checked += 1;
                if !directives[i].mask.permits(a) || !env_masks[i].permits(a) {
                    audit.mask_violations += 1;
                }
                speeds[i] = a;
                low[i].steps.push(Transition {
                    input,
                    masks: out.masks,
                    actions: out.actions,
                    log_prob: out.log_prob,
                    value: out.value,
                    reward: 0.0,
                    done: false,
                });
            }
        }
        if audit.mask_violations > 0 {
            return Err(Error::Contract(format!(
                "operational action outside its mask at t = {t}"
            )));
        }

        let commands: Vec<VesselCommand> = (0..n)
            .map(|i| VesselCommand {
                speed: SPEED_LEVELS[speeds[i]],
                route: directives[i].route_choice,
            })
            .collect();
        let outcome = sim.step(&commands)?;
        for (i, ret) in returns.iter_mut().enumerate() {
            ledger.record(i, outcome.metrics.fuel[i])?;
            *ret += outcome.base_rewards[i];
        }
        let delta = match config.fairness_timing {
            FairnessTiming::PerStep => fairness_vector(config, &ledger, &returns)?,
            FairnessTiming::Offline => vec![0.0; n],
        };
        let comps = shape_rewards(
            &outcome.base_rewards,
            dual.as_ref(),
            &outcome.metrics.emissions,
            &delta,
        )?;
        let cum = sim.state().cum_emissions;
        if let Some(d) = dual.as_mut() {
            *d = dual_update(d, cum);
            lambda_min = lambda_min.min(d.lambda);
        }
        cum_history.push(cum);
        rewards.push(comps);
        steps.push(outcome.metrics);
    }

    if config.fairness_enabled && config.fairness_timing == FairnessTiming::Offline {
        let delta = fairness_vector(config, &ledger, &returns)?;
        for row in rewards.iter_mut() {
            for (r, d) in row.iter_mut().zip(&delta) {
                *r = RewardComponents::new(r.base, r.constraint, *d);
            }
        }
    }
    for row in &rewards {
        for r in row {
            audit.rewards_checked += 1;
            if !r.is_consistent() {
                audit.decomposition_mismatches += 1;
            }
        }
    }

    for (t, row) in rewards.iter().enumerate() {
        let done = t + 1 == horizon;
        if agents.kind == PolicyKind::Centralized {
            let step = &mut low[0].steps[t];
            step.reward = row.iter().map(|r| r.adjusted).sum();
            step.done = done;
        } else {
            for (i, r) in row.iter().enumerate() {
                low[i].steps[t].reward = r.adjusted;
                low[i].steps[t].done = done;
            }
        }
        for (i, traj) in high.iter_mut().enumerate() {
            let w = t / HIGH_LEVEL_CADENCE;
            traj.steps[w].reward += row[i].adjusted;
            traj.steps[w].done = done;
        }
    }

    let vessel_fuel: Vec<f64> = sim.state().vessels.iter().map(|v| v.fuel_used).collect();
    let kpi = episode_kpis(&EpisodeSeries {
        episode,
        horizon,
        steps: &steps,
        rewards: &rewards,
        cum_history: &cum_history,
        vessel_fuel: &vessel_fuel,
        c_max: config.cap_enabled.then_some(config.c_max),
        lambda: dual.map_or(0.0, |d| d.lambda),
    })?;
    Ok(EpisodeOutcome {
        low,
        high,
        rewards,
        steps,
        cum_history,
        kpi,
        dual,
        lambda_min,
        audit,
    })
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub seed: u64,
    pub records: Vec<KPIRecord>,
    pub dual: Option<DualState>,
    pub agents: Agents,
    pub audit: Audit,
    /// Smallest multiplier seen at any step.
    pub lambda_min: f64,
    pub last_update: UpdateStats,
}

/// Trains one seed for `config.episodes` episodes.
pub fn train(config: &RunConfig, scenario: &ScenarioConfig, seed: u64) -> Result<TrainOutput> {
    train_with(config, scenario, seed, |_| Ok(()))
}

/// [`train`] with a hook called after every episode, before the update.
pub fn train_with(
    config: &RunConfig,
    scenario: &ScenarioConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeOutcome) -> Result<()>,
) -> Result<TrainOutput> {
    config.validate()?;
    scenario.validate()?;
    let mut sim = Simulator::with_options(scenario, config.sim_options(), episode_seed(seed, 0))?;
    let mut agents = Agents::new(config.policy_kind(), sim.n_vessels(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    let mut dual = if config.cap_enabled {
        Some(DualState::new(
            config.c_max,
            config.alpha_lambda,
            config.dual_mode,
        )?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(config.episodes);
    let mut audit = Audit::default();
    let mut lambda_min = f64::INFINITY;
    let mut low_buf = Vec::new();
    let mut high_buf = Vec::new();
    let mut last_update = UpdateStats::default();
    for episode in 0..config.episodes {
        if !config.lambda_persist {
            dual = dual.map(|d| DualState { lambda: 0.0, ..d });
        }
        let out = run_episode(
            &mut sim,
            &agents,
            dual,
            config,
            episode,
            episode_seed(seed, episode),
            &mut rng,
        )?;
        on_episode(&out)?;
        dual = out.dual;
        lambda_min = lambda_min.min(out.lambda_min);
        audit.merge(&out.audit);
        records.push(out.kpi);
        low_buf.extend(out.low);
        high_buf.extend(out.high);
        if (episode + 1) % config.update_every == 0 || episode + 1 == config.episodes {
            last_update = agents.update(&low_buf, &high_buf, &config.ppo, &mut rng)?;
            low_buf.clear();
            high_buf.clear();
        }
    }
    Ok(TrainOutput {
        seed,
        records,
        dual,
        agents,
        audit,
        lambda_min,
        last_update,
    })
}
