//! Softmax-linear policy with a frozen base weight matrix, a trainable
//! low-rank adapter, and a value head.
//!
//! Effective weights are `base + left · right`. The base matrix is
//! private and never touched by gradient steps; the frozen-base
//! invariant is checked by content hash in the outer loop.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_f64_bits;
use crate::num::Real;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Policy<T: Real> {
    base_weights: Array2<T>,
    pub adapter_left: Array2<T>,
    pub adapter_right: Array2<T>,
    pub value_head: Array1<T>,
    pub temperature: T,
    pub rank: usize,
    /// Seed the adapter was initialised from, kept for checkpoint lineage.
    pub init_seed: u64,
}

/// One sampled rollout from a fixed state: the action sequence with the
/// log-probs it had under the current and base policies, plus per-step
/// verifier rewards (filled in by the environment).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutEntry<T> {
    pub actions: Vec<usize>,
    pub logp_current: Vec<T>,
    pub logp_base: Vec<T>,
    pub step_rewards: Vec<T>,
}

impl<T: Real> RolloutEntry<T> {
    pub fn total_reward(&self) -> T {
        self.step_rewards.iter().cloned().sum()
    }
}

/// G rollouts sampled from one state; the unit every RL objective consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RolloutGroup<T: Real> {
    pub state: Array1<T>,
    pub rollouts: Vec<RolloutEntry<T>>,
}

impl<T: Real> RolloutGroup<T> {
    pub fn group_size(&self) -> usize {
        self.rollouts.len()
    }

    pub fn rewards(&self) -> Vec<T> {
        self.rollouts.iter().map(|r| r.total_reward()).collect()
    }
}

impl<T: Real> Policy<T> {
    /// Adapter-zero initialisation: `left` is a seeded uniform at unit
    /// scale, `right` is zero, so the initial effective policy equals
    /// the base policy exactly while gradients through `right` keep a
    /// usable magnitude from the first step.
    pub fn new(base_weights: Array2<T>, rank: usize, temperature: T, seed: u64) -> Self {
        let (d, n) = base_weights.dim();
        let mut stream = rng::stream(&[seed, 0x61646170]);
        let adapter_left = Array2::from_shape_fn((d, rank), |_| {
            T::c(stream.gen_range(-0.5..0.5))
        });
        Policy {
            base_weights,
            adapter_left,
            adapter_right: Array2::zeros((rank, n)),
            value_head: Array1::zeros(d),
            temperature,
            rank,
            init_seed: seed,
        }
    }

    pub fn d_features(&self) -> usize {
        self.base_weights.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.base_weights.ncols()
    }

    pub fn base_weights(&self) -> &Array2<T> {
        &self.base_weights
    }

    pub fn effective_weights(&self) -> Array2<T> {
        &self.base_weights + &self.adapter_left.dot(&self.adapter_right)
    }

    fn check_state(&self, state: &Array1<T>) -> Result<()> {
        if state.len() != self.d_features() {
            return Err(Error::DimensionMismatch {
                expected: self.d_features(),
                got: state.len(),
            });
        }
        Ok(())
    }

    fn logits(&self, weights: &Array2<T>, state: &Array1<T>) -> Array1<T> {
        weights.t().dot(state) / self.temperature
    }

    pub fn action_distribution(&self, state: &Array1<T>) -> Result<Array1<T>> {
        self.check_state(state)?;
        Ok(softmax(&self.logits(&self.effective_weights(), state)))
    }

    pub fn log_probs(&self, state: &Array1<T>) -> Result<Array1<T>> {
        self.check_state(state)?;
        Ok(log_softmax(&self.logits(&self.effective_weights(), state)))
    }

    pub fn base_log_probs(&self, state: &Array1<T>) -> Result<Array1<T>> {
        self.check_state(state)?;
        Ok(log_softmax(&self.logits(&self.base_weights, state)))
    }

    pub fn value(&self, state: &Array1<T>) -> Result<T> {
        self.check_state(state)?;
        Ok(self.value_head.dot(state))
    }

    /// Sample a fixed-state rollout of `horizon` actions. Step rewards
    /// are zero until a verifier scores the entry.
    pub fn sample_rollout(
        &self,
        state: &Array1<T>,
        horizon: usize,
        stream: &mut impl Rng,
    ) -> Result<RolloutEntry<T>> {
        let logp = self.log_probs(state)?;
        let logp_base_all = self.base_log_probs(state)?;
        let probs = logp.mapv(T::exp);
        let mut actions = Vec::with_capacity(horizon);
        let mut logp_current = Vec::with_capacity(horizon);
        let mut logp_base = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = sample_index(&probs, stream);
            actions.push(a);
            logp_current.push(logp[a]);
            logp_base.push(logp_base_all[a]);
        }
        Ok(RolloutEntry {
            actions,
            logp_current,
            logp_base,
            step_rewards: vec![T::zero(); horizon],
        })
    }

    /// Mean categorical KL(current ‖ base) over the given states.
    pub fn kl_to_base(&self, states: &[Array1<T>]) -> Result<T> {
        if states.is_empty() {
            return Err(Error::Domain("kl_to_base needs at least one state".into()));
        }
        let mut total = T::zero();
        for s in states {
            let lp = self.log_probs(s)?;
            let lq = self.base_log_probs(s)?;
            let mut kl = T::zero();
            for i in 0..lp.len() {
                kl += lp[i].exp() * (lp[i] - lq[i]);
            }
            total += kl;
        }
        Ok(total / T::from_usize(states.len()).unwrap())
    }

    /// Ascent step on adapter factors and value head; the base matrix is
    /// untouched. Callers encode descent by negating their gradients.
    pub fn apply_gradient_step(&self, grads: &AdapterGrads<T>, learning_rate: T) -> Result<Policy<T>> {
        if grads.left.dim() != self.adapter_left.dim()
            || grads.right.dim() != self.adapter_right.dim()
            || grads.value.len() != self.value_head.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "gradient shapes {:?}/{:?}/{} vs adapter {:?}/{:?}/{}",
                grads.left.dim(),
                grads.right.dim(),
                grads.value.len(),
                self.adapter_left.dim(),
                self.adapter_right.dim(),
                self.value_head.len()
            )));
        }
        Ok(Policy {
            base_weights: self.base_weights.clone(),
            adapter_left: &self.adapter_left + &(&grads.left * learning_rate),
            adapter_right: &self.adapter_right + &(&grads.right * learning_rate),
            value_head: &self.value_head + &(&grads.value * learning_rate),
            temperature: self.temperature,
            rank: self.rank,
            init_seed: self.init_seed,
        })
    }

    pub fn base_hash(&self) -> String {
        hash_f64_bits(self.base_weights.iter().map(|v| v.to_f64().unwrap()))
    }

    /// Hash over every parameter, frozen and trainable.
    pub fn content_hash(&self) -> String {
        let all = self
            .base_weights
            .iter()
            .chain(self.adapter_left.iter())
            .chain(self.adapter_right.iter())
            .chain(self.value_head.iter())
            .map(|v| v.to_f64().unwrap())
            .chain(std::iter::once(self.temperature.to_f64().unwrap()));
        hash_f64_bits(all)
    }

    /// Self-describing checkpoint form; round-trips bit-exactly.
    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Policy<T>> {
        let p: Policy<T> = serde_json::from_str(text)?;
        Ok(p)
    }
}

/// Gradients for the trainable parameters only.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads<T: Real> {
    pub left: Array2<T>,
    pub right: Array2<T>,
    pub value: Array1<T>,
}

impl<T: Real> AdapterGrads<T> {
    pub fn zeros_like(policy: &Policy<T>) -> Self {
        AdapterGrads {
            left: Array2::zeros(policy.adapter_left.dim()),
            right: Array2::zeros(policy.adapter_right.dim()),
            value: Array1::zeros(policy.value_head.len()),
        }
    }

    /// Convert a gradient w.r.t. the effective weight matrix into
    /// gradients on the two adapter factors (chain rule through
    /// `W = base + left · right`).
    pub fn add_effective_weight_grad(&mut self, policy: &Policy<T>, grad_w: &Array2<T>) {
        self.left = &self.left + &grad_w.dot(&policy.adapter_right.t());
        self.right = &self.right + &policy.adapter_left.t().dot(grad_w);
    }

    pub fn norm(&self) -> T {
        let sq: T = self
            .left
            .iter()
            .chain(self.right.iter())
            .chain(self.value.iter())
            .map(|v| *v * *v)
            .sum();
        sq.sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        self.left.mapv_inplace(|v| v * factor);
        self.right.mapv_inplace(|v| v * factor);
        self.value.mapv_inplace(|v| v * factor);
    }
}

pub fn softmax<T: Real>(logits: &Array1<T>) -> Array1<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum: T = exps.iter().cloned().sum();
    exps / sum
}

pub fn log_softmax<T: Real>(logits: &Array1<T>) -> Array1<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let log_sum: T = logits.iter().map(|z| (*z - max).exp()).sum::<T>().ln() + max;
    logits.mapv(|z| z - log_sum)
}

pub fn sample_index<T: Real>(probs: &Array1<T>, stream: &mut impl Rng) -> usize {
    let u = T::c(stream.gen::<f64>());
    let mut acc = T::zero();
    for (i, p) in probs.iter().enumerate() {
        acc += *p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
