//! One-hidden-layer actor-critic network with hand-written backprop, and
//! the Adam optimizer.
//!
//! Parameters live in one flat `Vec<f64>` laid out as
//! `[W1 (hidden x input), b1, Wp (actions x hidden), bp, Wv (hidden), bv]`,
//! where `actions` is the total width of all categorical heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
    /// Size of each factorized categorical head.
    pub heads: Vec<usize>,
}

impl Layout {
    pub fn new(input: usize, hidden: usize, heads: Vec<usize>) -> Result<Self> {
        if input == 0 || hidden == 0 || heads.is_empty() || heads.contains(&0) {
            return Err(Error::config(
                "layout",
                "every layer dimension must be >= 1",
            ));
        }
        Ok(Layout {
            input,
            hidden,
            heads,
        })
    }

    pub fn actions(&self) -> usize {
        self.heads.iter().sum()
    }

    pub fn n_params(&self) -> usize {
        let a = self.actions();
        self.hidden * self.input + self.hidden + a * self.hidden + a + self.hidden + 1
    }

    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        self.hidden * self.input
    }
    fn wp(&self) -> usize {
        self.b1() + self.hidden
    }
    fn bp(&self) -> usize {
        self.wp() + self.actions() * self.hidden
    }
    /// Index of the first value-head parameter.
    pub fn value_head_start(&self) -> usize {
        self.bp() + self.actions()
    }

    /// Offsets of each head within the flat logit vector.
    pub fn head_offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.heads
            .iter()
            .map(|h| {
                let o = at;
                at += h;
                o
            })
            .collect()
    }

    /// (fan_in, is_weight) per parameter, for initialization.
    fn fan_in(&self, idx: usize) -> Option<usize> {
        if idx < self.b1() {
            Some(self.input)
        } else if idx < self.wp() {
            None
        } else if idx < self.bp() {
            Some(self.hidden)
        } else if idx < self.value_head_start() {
            None
        } else if idx < self.value_head_start() + self.hidden {
            Some(self.hidden)
        } else {
            None
        }
    }
}

/// Network parameters plus their layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

impl Mlp {
    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init<R: Rng + ?Sized>(layout: Layout, rng: &mut R) -> Self {
        let params = (0..layout.n_params())
            .map(|i| match layout.fan_in(i) {
                Some(fan) => {
                    let s = 1.0 / (fan as f64).sqrt();
                    rng.gen_range(-s..=s)
                }
                None => 0.0,
            })
            .collect();
        Mlp { layout, params }
    }

    pub fn zeros(layout: Layout) -> Self {
        let params = vec![0.0; layout.n_params()];
        Mlp { layout, params }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        let l = &self.layout;
        if x.len() != l.input {
            return Err(Error::Contract(format!(
                "input length {} != {}",
                x.len(),
                l.input
            )));
        }
        let p = &self.params;
        let hidden: Vec<f64> = (0..l.hidden)
            .map(|j| {
                let row = &p[l.w1() + j * l.input..l.w1() + (j + 1) * l.input];
                let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + p[l.b1() + j];
                z.tanh()
            })
            .collect();
        let logits = (0..l.actions())
            .map(|a| {
                let row = &p[l.wp() + a * l.hidden..l.wp() + (a + 1) * l.hidden];
                row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>() + p[l.bp() + a]
            })
            .collect();
        let vs = l.value_head_start();
        let value = p[vs..vs + l.hidden]
            .iter()
            .zip(&hidden)
            .map(|(w, h)| w * h)
            .sum::<f64>()
            + p[vs + l.hidden];
        Ok(ForwardCache {
            hidden,
            logits,
            value,
        })
    }

    /// Accumulates parameter gradients into `grad` given upstream gradients
    /// on the logits and on the value output.
    pub fn backward(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        d_logits: &[f64],
        d_value: f64,
        grad: &mut [f64],
    ) {
        let l = &self.layout;
        let p = &self.params;
        let mut d_hidden = vec![0.0; l.hidden];
        for (a, &dz) in d_logits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            let w = l.wp() + a * l.hidden;
            for j in 0..l.hidden {
                grad[w + j] += dz * cache.hidden[j];
                d_hidden[j] += dz * p[w + j];
            }
            grad[l.bp() + a] += dz;
        }
        let vs = l.value_head_start();
        for j in 0..l.hidden {
            grad[vs + j] += d_value * cache.hidden[j];
            d_hidden[j] += d_value * p[vs + j];
        }
        grad[vs + l.hidden] += d_value;
        for j in 0..l.hidden {
            let dpre = d_hidden[j] * (1.0 - cache.hidden[j] * cache.hidden[j]);
            if dpre == 0.0 {
                continue;
            }
            let w = l.w1() + j * l.input;
            for (i, xi) in x.iter().enumerate() {
                grad[w + i] += dpre * xi;
            }
            grad[l.b1() + j] += dpre;
        }
    }
}

/// Softmax over the permitted entries of one head; forbidden entries get
/// exactly zero probability.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Contract("mask length differs from head size".into()));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(z, _)| *z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Contract("mask permits no action".into()));
    }
    let exps: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(z, &m)| if m { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Entropy of a distribution, skipping zero entries.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Gradient-descent step; `lr(i)` gives the rate for parameter `i`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: impl Fn(usize) -> f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let rate = lr(i);
            if rate == 0.0 {
                continue;
            }
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= rate * mh / (vh.sqrt() + self.eps);
        }
    }
}
