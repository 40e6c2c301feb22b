//! Hierarchical policies: a strategic level that picks routes and emission
//! budgets, and an operational level that picks speeds inside the mask the
//! budget allows.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Level, Observation, PhysicsParams, SPEED_LEVELS};
use crate::error::{Error, Result};
use crate::nn::{masked_softmax, Layout, Mlp};

pub const HIDDEN: usize = 64;
/// Low-level steps per strategic decision.
pub const HIGH_LEVEL_CADENCE: usize = 10;
pub const ROUTE_CHOICES: usize = 3;
pub const BUDGET_FRACTIONS: [f64; 3] = [0.25, 0.5, 1.0];
pub const HIGH_ACTIONS: usize = ROUTE_CHOICES * BUDGET_FRACTIONS.len();
pub const LOW_ACTIONS: usize = SPEED_LEVELS.len();

/// Boolean mask over a discrete action set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionMask(pub Vec<bool>);

impl ActionMask {
    pub fn all(n: usize) -> Self {
        ActionMask(vec![true; n])
    }

    /// Only action 0 (stop) permitted.
    pub fn only_first(n: usize) -> Self {
        let mut m = vec![false; n];
        m[0] = true;
        ActionMask(m)
    }

    pub fn permits(&self, action: usize) -> bool {
        self.0.get(action).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|m| **m).count()
    }

    pub fn and(&self, other: &ActionMask) -> ActionMask {
        ActionMask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }
}

/// Strategic decision for one vessel over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighDirective {
    pub route_choice: usize,
    pub budget_fraction: f64,
    /// Tonnes allowed over the window; infinite when no cap applies.
    pub emission_budget: f64,
    pub feasible_speed_cap: f64,
    pub mask: ActionMask,
}

impl HighDirective {
    /// Directive that leaves the low level unrestricted.
    pub fn unrestricted(params: &PhysicsParams) -> Self {
        HighDirective {
            route_choice: 0,
            budget_fraction: 1.0,
            emission_budget: f64::INFINITY,
            feasible_speed_cap: params.v_max,
            mask: ActionMask::all(LOW_ACTIONS),
        }
    }

    /// Decodes a strategic action index against the budget it scales.
    pub fn from_action(
        action: usize,
        share: f64,
        window: f64,
        params: &PhysicsParams,
    ) -> Result<Self> {
        if action >= HIGH_ACTIONS {
            return Err(Error::Contract(format!(
                "high-level action {action} out of range"
            )));
        }
        let route_choice = action / BUDGET_FRACTIONS.len();
        let budget_fraction = BUDGET_FRACTIONS[action % BUDGET_FRACTIONS.len()];
        let emission_budget = budget_fraction * share;
        let (mask, feasible_speed_cap) = derive_feasible_mask(emission_budget, window, params)?;
        Ok(HighDirective {
            route_choice,
            budget_fraction,
            emission_budget,
            feasible_speed_cap,
            mask,
        })
    }
}

/// Speeds whose calm-water burn over `window` hours fits in `budget`.
///
/// Stopping is always permitted. Returns the mask and the continuous speed
/// cap `(budget / (k_f * window))^(1/3)` clamped to `[0, v_max]`.
pub fn derive_feasible_mask(
    budget: f64,
    window: f64,
    params: &PhysicsParams,
) -> Result<(ActionMask, f64)> {
    if !(budget >= 0.0) {
        return Err(Error::Domain(format!("negative emission budget {budget}")));
    }
    if !(window > 0.0) {
        return Err(Error::Domain(format!("window {window} must be positive")));
    }
    let cap = (budget / (params.k_f * window))
        .cbrt()
        .clamp(0.0, params.v_max);
    let mask = SPEED_LEVELS
        .iter()
        .map(|&v| v == 0.0 || (v <= params.v_max && params.k_f * v * v * v * window <= budget))
        .collect();
    Ok((ActionMask(mask), cap))
}

/// Network input: observed values, presence flags, then caller extras
/// (agent one-hot, directive features).
pub fn encode_observation(obs: &Observation, extras: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.values.len() * 2 + extras.len());
    x.extend_from_slice(&obs.values);
    x.extend(obs.present.iter().map(|&p| if p { 1.0 } else { 0.0 }));
    x.extend_from_slice(extras);
    x
}

/// Creates a seeded network.
pub fn init_policy(layout: Layout, seed: u64) -> Mlp {
    Mlp::init(layout, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Per-head action probabilities and the value estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub probs: Vec<Vec<f64>>,
    pub value: f64,
}

pub fn forward(net: &Mlp, input: &[f64], masks: &[ActionMask]) -> Result<PolicyOutput> {
    let heads = &net.layout.heads;
    if masks.len() != heads.len() {
        return Err(Error::Contract(format!(
            "{} masks for {} heads",
            masks.len(),
            heads.len()
        )));
    }
    let cache = net.forward(input)?;
    let mut probs = Vec::with_capacity(heads.len());
    let mut at = 0;
    for (h, m) in heads.iter().zip(masks) {
        probs.push(masked_softmax(&cache.logits[at..at + h], &m.0)?);
        at += h;
    }
    Ok(PolicyOutput {
        probs,
        value: cache.value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    Sample,
    /// Argmax; ties go to the lowest index.
    Greedy,
    /// With probability `epsilon` pick uniformly among permitted actions.
    EpsilonGreedy(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutcome {
    pub actions: Vec<usize>,
    /// Summed log-probability of the chosen actions under the policy.
    pub log_prob: f64,
    pub value: f64,
    /// Masks actually applied, one per head.
    pub masks: Vec<ActionMask>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Chooses an action. The low level requires the directive whose mask
/// bounds it; the mask is intersected with each supplied head mask.
pub fn act<R: Rng + ?Sized>(
    level: Level,
    net: &Mlp,
    input: &[f64],
    masks: &[ActionMask],
    directive: Option<&HighDirective>,
    mode: ActMode,
    rng: &mut R,
) -> Result<ActOutcome> {
    let masks: Vec<ActionMask> = match (level, directive) {
        (Level::Low, None) => {
            return Err(Error::Contract(
                "low-level action requires a directive".into(),
            ))
        }
        (Level::Low, Some(d)) => masks.iter().map(|m| m.and(&d.mask)).collect(),
        (Level::High, _) => masks.to_vec(),
    };
    let out = forward(net, input, &masks)?;
    let mut actions = Vec::with_capacity(out.probs.len());
    let mut log_prob = 0.0;
    for (p, m) in out.probs.iter().zip(&masks) {
        let a = match mode {
            ActMode::Sample => sample_index(p, rng),
            ActMode::Greedy => argmax(p),
            ActMode::EpsilonGreedy(eps) => {
                if rng.gen::<f64>() < eps {
                    let allowed: Vec<usize> = (0..m.0.len()).filter(|&i| m.0[i]).collect();
                    allowed[rng.gen_range(0..allowed.len())]
                } else {
                    sample_index(p, rng)
                }
            }
        };
        log_prob += p[a].ln();
        actions.push(a);
    }
    Ok(ActOutcome {
        actions,
        log_prob,
        value: out.value,
        masks,
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"SEACAPCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Header stored ahead of the parameters in a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub layout: Layout,
    pub seed: u64,
    pub step: u64,
}

/// Little-endian checkpoint: magic, version, layout dims, seed, step count,
/// parameter count, then the f64 parameters.
pub fn write_checkpoint<W: Write>(w: &mut W, net: &Mlp, seed: u64, step: u64) -> Result<()> {
    let l = &net.layout;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for d in [l.input as u32, l.hidden as u32, l.heads.len() as u32] {
        w.write_all(&d.to_le_bytes())?;
    }
    for &h in &l.heads {
        w.write_all(&(h as u32).to_le_bytes())?;
    }
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&step.to_le_bytes())?;
    w.write_all(&(net.params.len() as u64).to_le_bytes())?;
    for p in &net.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(Mlp, CheckpointHeader)> {
    fn u32_of<R: Read>(r: &mut R) -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64_of<R: Read>(r: &mut R) -> Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::config("checkpoint", "bad magic"));
    }
    let version = u32_of(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::config(
            "checkpoint",
            format!("unsupported version {version}"),
        ));
    }
    let input = u32_of(r)? as usize;
    let hidden = u32_of(r)? as usize;
    let n_heads = u32_of(r)? as usize;
    let heads = (0..n_heads)
        .map(|_| u32_of(r).map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let layout = Layout::new(input, hidden, heads)?;
    let seed = u64_of(r)?;
    let step = u64_of(r)?;
    let n = u64_of(r)? as usize;
    if n != layout.n_params() {
        return Err(Error::config(
            "checkpoint",
            format!("{n} parameters for a layout needing {}", layout.n_params()),
        ));
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        params.push(f64::from_le_bytes(b));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::config("checkpoint", "non-finite parameter"));
    }
    Ok((
        Mlp {
            layout: layout.clone(),
            params,
        },
        CheckpointHeader { layout, seed, step },
    ))
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &Mlp, seed: u64, step: u64) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, net, seed, step)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Mlp, CheckpointHeader)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut f)
}
