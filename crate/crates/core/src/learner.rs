//! Clipped-surrogate actor-critic updates with generalized advantage
//! estimation, plus a central-difference gradient check.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{entropy, masked_softmax, Adam, Mlp};
use crate::policy::ActionMask;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Encoded network input.
    pub input: Vec<f64>,
    /// Mask applied to each head when the action was chosen.
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub log_prob: f64,
    pub value: f64,
    /// Adjusted reward.
    pub reward: f64,
    pub done: bool,
}

/// One agent's steps at one level for one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exploration {
    /// Stochastic policy with an entropy bonus.
    Entropy,
    /// Linear epsilon decay from `start` to `end` over `episodes`.
    EpsilonGreedy {
        start: f64,
        end: f64,
        episodes: usize,
    },
}

impl Exploration {
    pub fn epsilon(&self, episode: usize) -> Option<f64> {
        match *self {
            Exploration::Entropy => None,
            Exploration::EpsilonGreedy {
                start,
                end,
                episodes,
            } => {
                let frac = if episodes == 0 {
                    1.0
                } else {
                    (episode as f64 / episodes as f64).min(1.0)
                };
                Some(start * (1.0 - frac) + end * frac)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOHyper {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub exploration: Exploration,
}

impl Default for PPOHyper {
    fn default() -> Self {
        PPOHyper {
            clip: 0.2,
            epochs: 4,
            minibatch: 64,
            actor_lr: 5e-4,
            critic_lr: 1e-3,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            exploration: Exploration::Entropy,
        }
    }
}

impl PPOHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, m: &str| Err(Error::config(format!("ppo.{k}"), m.to_string()));
        if !(self.clip > 0.0) {
            return bad("clip", "must be > 0");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", "must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", "must lie in [0, 1]");
        }
        if !(self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return bad("actor_lr", "rates must be non-negative");
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return bad("epochs", "epochs and minibatch must be >= 1");
        }
        Ok(())
    }
}

/// GAE over one trajectory. Returns raw (unnormalized) advantages and
/// returns = advantages + values. The step after the last one is valued at
/// zero.
pub fn compute_advantages(
    traj: &Trajectory,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if traj.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    let n = traj.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let s = &traj.steps[t];
        let (next_value, carry) = if s.done || t + 1 == n {
            (0.0, 0.0)
        } else {
            (traj.steps[t + 1].value, running)
        };
        let delta = s.reward + gamma * next_value - s.value;
        running = delta + gamma * gae_lambda * carry;
        adv[t] = running;
    }
    let returns = adv
        .iter()
        .zip(&traj.steps)
        .map(|(a, s)| a + s.value)
        .collect();
    Ok((adv, returns))
}

/// Shifts to zero mean and scales to unit population variance. Batches of
/// one are left alone.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() <= 1 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 0.0 {
            *a /= std;
        }
    }
}

/// A training sample ready for the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

/// Flattens trajectories into samples with batch-normalized advantages.
pub fn build_batch(trajs: &[Trajectory], hyper: &PPOHyper) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut advs = Vec::new();
    for traj in trajs.iter().filter(|t| !t.is_empty()) {
        let (a, r) = compute_advantages(traj, hyper.gamma, hyper.gae_lambda)?;
        for ((s, a), r) in traj.steps.iter().zip(a).zip(r) {
            advs.push(a);
            samples.push(Sample {
                input: s.input.clone(),
                masks: s.masks.clone(),
                actions: s.actions.clone(),
                old_log_prob: s.log_prob,
                advantage: 0.0,
                ret: r,
            });
        }
    }
    normalize_advantages(&mut advs);
    for (s, a) in samples.iter_mut().zip(advs) {
        s.advantage = a;
    }
    Ok(samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Loss coefficients used by [`loss_and_grad`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefs {
    pub clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl From<&PPOHyper> for LossCoefs {
    fn from(h: &PPOHyper) -> Self {
        let entropy_coef = match h.exploration {
            Exploration::Entropy => h.entropy_coef,
            Exploration::EpsilonGreedy { .. } => 0.0,
        };
        LossCoefs {
            clip: h.clip,
            value_coef: h.value_coef,
            entropy_coef,
        }
    }
}

/// Clipped-surrogate loss to minimize:
/// `-mean(min(rA, clip(r)A)) + c_v mean((V - R)^2) - c_e mean(H)`.
///
/// When `grad` is given, the analytic gradient is accumulated into it.
pub fn loss_and_grad(
    net: &Mlp,
    batch: &[Sample],
    coefs: &LossCoefs,
    mut grad: Option<&mut [f64]>,
) -> Result<(f64, UpdateStats)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let b = batch.len() as f64;
    let heads = &net.layout.heads;
    let mut stats = UpdateStats::default();
    let mut loss = 0.0;
    let mut d_logits = vec![0.0; net.layout.actions()];
    for s in batch {
        if !s.old_log_prob.is_finite() {
            return Err(Error::Domain("non-finite behaviour log-probability".into()));
        }
        let cache = net.forward(&s.input)?;
        let mut probs = Vec::with_capacity(heads.len());
        let mut at = 0;
        for (h, m) in heads.iter().zip(&s.masks) {
            probs.push(masked_softmax(&cache.logits[at..at + h], &m.0)?);
            at += h;
        }
        let log_prob: f64 = probs.iter().zip(&s.actions).map(|(p, &a)| p[a].ln()).sum();
        let ratio = (log_prob - s.old_log_prob).exp();
        let a = s.advantage;
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - coefs.clip, 1.0 + coefs.clip) * a;
        let surrogate = unclipped.min(clipped);
        let d_surr_d_logp = if unclipped <= clipped { unclipped } else { 0.0 };
        if (ratio - 1.0).abs() > coefs.clip {
            stats.clip_fraction += 1.0 / b;
        }
        let ent: f64 = probs.iter().map(|p| entropy(p)).sum();
        let err = cache.value - s.ret;
        loss += (-surrogate + coefs.value_coef * err * err - coefs.entropy_coef * ent) / b;
        stats.policy_loss += -surrogate / b;
        stats.value_loss += err * err / b;
        stats.entropy += ent / b;

        if let Some(g) = grad.as_deref_mut() {
            let mut at = 0;
            for ((p, &act), h) in probs.iter().zip(&s.actions).zip(heads) {
                let h_ent = entropy(p);
                for k in 0..*h {
                    let pk = p[k];
                    let d_logp = if k == act { 1.0 } else { 0.0 } - pk;
                    let d_ent = if pk > 0.0 {
                        -pk * (pk.ln() + h_ent)
                    } else {
                        0.0
                    };
                    d_logits[at + k] = (-d_surr_d_logp * d_logp - coefs.entropy_coef * d_ent) / b;
                }
                at += h;
            }
            let d_value = 2.0 * coefs.value_coef * err / b;
            net.backward(&s.input, &cache, &d_logits, d_value, g);
        }
    }
    Ok((loss, stats))
}

/// Runs `epochs` passes of shuffled minibatch Adam steps over `batch`.
///
/// The trunk and policy head use the actor rate; the value head uses the
/// critic rate. A non-finite gradient aborts the update at that minibatch.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut Mlp,
    adam: &mut Adam,
    batch: &[Sample],
    hyper: &PPOHyper,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let coefs = LossCoefs::from(hyper);
    let value_start = net.layout.value_head_start();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut total = UpdateStats::default();
    let mut count = 0.0;
    let mut grad = vec![0.0; net.params.len()];
    let mut mb = Vec::with_capacity(hyper.minibatch);
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.minibatch) {
            mb.clear();
            mb.extend(chunk.iter().map(|&i| batch[i].clone()));
            grad.iter_mut().for_each(|g| *g = 0.0);
            let (loss, stats) = loss_and_grad(net, &mb, &coefs, Some(&mut grad))?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !(norm.is_finite() && loss.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "loss {loss}, gradient norm {norm} after {count} minibatches"
                )));
            }
            if hyper.max_grad_norm > 0.0 && norm > hyper.max_grad_norm {
                let scale = hyper.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= scale);
            }
            adam.step(&mut net.params, &grad, |i| {
                if i >= value_start {
                    hyper.critic_lr
                } else {
                    hyper.actor_lr
                }
            });
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.clip_fraction += stats.clip_fraction;
            total.grad_norm += norm;
            count += 1.0;
        }
    }
    if net.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("parameters became non-finite".into()));
    }
    Ok(UpdateStats {
        policy_loss: total.policy_loss / count,
        value_loss: total.value_loss / count,
        entropy: total.entropy / count,
        clip_fraction: total.clip_fraction / count,
        grad_norm: total.grad_norm / count,
    })
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares analytic gradients of the full loss with central differences on
/// `n_checks` randomly chosen parameters.
///
/// `fault_scale` multiplies the analytic gradient before comparison; 1.0 is
/// the honest check, other values inject a known fault.
pub fn grad_check<R: Rng + ?Sized>(
    net: &Mlp,
    batch: &[Sample],
    coefs: &LossCoefs,
    fd_step: f64,
    n_checks: usize,
    fault_scale: f64,
    rng: &mut R,
) -> Result<GradCheck> {
    let mut analytic = vec![0.0; net.params.len()];
    loss_and_grad(net, batch, coefs, Some(&mut analytic))?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let n = net.params.len();
    let picks: Vec<usize> = if n_checks >= n {
        (0..n).collect()
    } else {
        rand::seq::index::sample(rng, n, n_checks).into_vec()
    };
    for &i in &picks {
        let orig = probe.params[i];
        probe.params[i] = orig + fd_step;
        let (up, _) = loss_and_grad(&probe, batch, coefs, None)?;
        probe.params[i] = orig - fd_step;
        let (down, _) = loss_and_grad(&probe, batch, coefs, None)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * fd_step);
        let a = analytic[i] * fault_scale;
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked: picks.len(),
    })
}

/// Random batch for gradient checks: inputs, masks, actions, behaviour
/// log-probabilities perturbed off-policy, advantages and returns.
pub fn random_batch<R: Rng + ?Sized>(net: &Mlp, size: usize, rng: &mut R) -> Result<Vec<Sample>> {
    let heads = net.layout.heads.clone();
    (0..size)
        .map(|_| {
            let input: Vec<f64> = (0..net.layout.input)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let masks: Vec<ActionMask> = heads
                .iter()
                .map(|&h| {
                    let mut m: Vec<bool> = (0..h).map(|_| rng.gen_bool(0.7)).collect();
                    m[0] = true;
                    ActionMask(m)
                })
                .collect();
            let cache = net.forward(&input)?;
            let mut actions = Vec::with_capacity(heads.len());
            let mut log_prob = 0.0;
            let mut at = 0;
            for (h, m) in heads.iter().zip(&masks) {
                let p = masked_softmax(&cache.logits[at..at + h], &m.0)?;
                let allowed: Vec<usize> = (0..*h).filter(|&k| m.0[k]).collect();
                let a = allowed[rng.gen_range(0..allowed.len())];
                log_prob += p[a].ln();
                actions.push(a);
                at += h;
            }
            Ok(Sample {
                input,
                masks,
                actions,
                // Keep the ratio inside the clip band so the check sees a
                // smooth surrogate.
                old_log_prob: log_prob + rng.gen_range(-0.1..0.1),
                advantage: rng.gen_range(-2.0..2.0),
                ret: rng.gen_range(-2.0..2.0),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layout;
    use crate::policy::init_policy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(reward: f64, value: f64, done: bool) -> Transition {
        Transition {
            input: vec![0.0],
            masks: vec![ActionMask::all(2)],
            actions: vec![0],
            log_prob: -(2f64.ln()),
            value,
            reward,
            done,
        }
    }

    #[test]
    fn single_terminal_step() {
        let t = Trajectory {
            steps: vec![step(1.0, 0.0, true)],
        };
        let (a, r) = compute_advantages(&t, 0.99, 0.95).unwrap();
        assert_eq!((a[0], r[0]), (1.0, 1.0));
    }

    #[test]
    fn two_step_unroll() {
        let t = Trajectory {
            steps: vec![step(0.0, 0.0, false), step(1.0, 0.0, true)],
        };
        let (a, r) = compute_advantages(&t, 0.99, 0.95).unwrap();
        assert!((a[0] - 0.9405).abs() < 1e-12);
        assert_eq!(a[1], 1.0);
        assert_eq!(a, r);
    }

    #[test]
    fn myopic_limit() {
        let t = Trajectory {
            steps: vec![
                step(0.5, 0.2, false),
                step(-1.0, 0.7, false),
                step(2.0, -0.3, true),
            ],
        };
        let (a, _) = compute_advantages(&t, 0.0, 0.95).unwrap();
        for (ai, s) in a.iter().zip(&t.steps) {
            assert_eq!(*ai, s.reward - s.value);
        }
    }

    #[test]
    fn empty_trajectory_is_domain_error() {
        assert!(matches!(
            compute_advantages(&Trajectory::default(), 0.99, 0.95),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn normalization_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a: Vec<f64> = (0..257).map(|_| rng.gen_range(-30.0..50.0)).collect();
        normalize_advantages(&mut a);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() <= 1e-9);
        assert!((var - 1.0).abs() <= 1e-6);
        let mut one = vec![3.5];
        normalize_advantages(&mut one);
        assert_eq!(one, vec![3.5]);
    }

    fn on_policy_batch(net: &Mlp, adv: f64, ratio_shift: f64) -> Vec<Sample> {
        let input = vec![0.3, -0.2];
        let cache = net.forward(&input).unwrap();
        let p = masked_softmax(&cache.logits, &[true; 4]).unwrap();
        vec![Sample {
            input,
            masks: vec![ActionMask::all(4)],
            actions: vec![1],
            old_log_prob: p[1].ln() - ratio_shift,
            advantage: adv,
            ret: 0.0,
        }]
    }

    #[test]
    fn on_policy_surrogate_is_mean_advantage() {
        let net = init_policy(Layout::new(2, 8, vec![4]).unwrap(), 1);
        let coefs = LossCoefs {
            clip: 0.2,
            value_coef: 0.0,
            entropy_coef: 0.0,
        };
        let (_, stats) =
            loss_and_grad(&net, &on_policy_batch(&net, 0.7, 0.0), &coefs, None).unwrap();
        assert!((stats.policy_loss + 0.7).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn positive_advantage_clips_at_upper_bound() {
        let net = init_policy(Layout::new(2, 8, vec![4]).unwrap(), 1);
        let coefs = LossCoefs {
            clip: 0.2,
            value_coef: 0.0,
            entropy_coef: 0.0,
        };
        let batch = on_policy_batch(&net, 2.0, 1.5f64.ln());
        let (_, stats) = loss_and_grad(&net, &batch, &coefs, None).unwrap();
        assert!((stats.policy_loss + 1.2 * 2.0).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 1.0);
        let mut g = vec![0.0; net.params.len()];
        loss_and_grad(&net, &batch, &coefs, Some(&mut g)).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn uniform_policy_entropy() {
        let net = Mlp::zeros(Layout::new(2, 8, vec![4]).unwrap());
        let coefs = LossCoefs {
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        };
        let (_, stats) =
            loss_and_grad(&net, &on_policy_batch(&net, 0.0, 0.0), &coefs, None).unwrap();
        assert!((stats.entropy - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_rates_leave_params_unchanged() {
        let mut net = init_policy(Layout::new(3, 16, vec![5]).unwrap(), 8);
        let before = net.params.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = random_batch(&net, 100, &mut rng).unwrap();
        let hyper = PPOHyper {
            actor_lr: 0.0,
            critic_lr: 0.0,
            ..Default::default()
        };
        let mut adam = Adam::new(net.params.len());
        ppo_update(&mut net, &mut adam, &batch, &hyper, &mut rng).unwrap();
        assert_eq!(net.params, before);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = init_policy(Layout::new(6, 64, vec![5]).unwrap(), 3);
        let batch = random_batch(&net, 24, &mut rng).unwrap();
        let coefs = LossCoefs::from(&PPOHyper::default());
        let ok = grad_check(&net, &batch, &coefs, 1e-5, 80, 1.0, &mut rng).unwrap();
        assert!(ok.max_rel_error <= 1e-4, "{}", ok.max_rel_error);
        let bad = grad_check(&net, &batch, &coefs, 1e-5, 80, 2.0, &mut rng).unwrap();
        assert!(bad.max_rel_error >= 0.3, "{}", bad.max_rel_error);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn zero_network_value_head_gradient() {
        let net = Mlp::zeros(Layout::new(4, 8, vec![3]).unwrap());
        let sample = |ret: f64, a: usize| Sample {
            input: vec![0.5, -0.5, 0.25, -0.25],
            masks: vec![ActionMask::all(3)],
            actions: vec![a],
            old_log_prob: (1.0f64 / 3.0).ln(),
            advantage: 0.0,
            ret,
        };
        let batch = vec![
            sample(1.0, 0),
            sample(-1.0, 1),
            sample(0.5, 2),
            sample(-0.5, 0),
        ];
        let coefs = LossCoefs::from(&PPOHyper::default());
        let mut g = vec![0.0; net.params.len()];
        loss_and_grad(&net, &batch, &coefs, Some(&mut g)).unwrap();
        let h = 1e-6;
        for i in net.layout.value_head_start()..net.params.len() {
            let mut up = net.clone();
            up.params[i] += h;
            let mut down = net.clone();
            down.params[i] -= h;
            let fd = (loss_and_grad(&up, &batch, &coefs, None).unwrap().0
                - loss_and_grad(&down, &batch, &coefs, None).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6, "param {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn non_finite_advantage_aborts_update() {
        let mut net = init_policy(Layout::new(3, 8, vec![2]).unwrap(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut batch = random_batch(&net, 4, &mut rng).unwrap();
        batch[0].advantage = f64::NAN;
        let mut adam = Adam::new(net.params.len());
        let err = ppo_update(&mut net, &mut adam, &batch, &PPOHyper::default(), &mut rng);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn epsilon_schedule() {
        let e = Exploration::EpsilonGreedy {
            start: 0.2,
            end: 0.01,
            episodes: 500,
        };
        assert_eq!(e.epsilon(0), Some(0.2));
        assert!((e.epsilon(250).unwrap() - 0.105).abs() < 1e-12);
        assert_eq!(e.epsilon(900), Some(0.01));
        assert_eq!(Exploration::Entropy.epsilon(3), None);
    }
}
