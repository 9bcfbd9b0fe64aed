//! The six weight-update objectives and the per-step dispatcher.
//!
//! Every objective is a pure function from rollout data to a loss (or
//! objective) and exact analytic adapter gradients; the dispatcher turns
//! one invocation into one gradient step on the policy.

pub mod bc;
pub mod dpo;
pub mod entropic;
pub mod gae;
pub mod grad;
pub mod grpo;
pub mod ppo;
pub mod reinforce;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::policy::{AdapterGrads, Policy, RolloutGroup};

pub use bc::{bc_loss, select_top_k};
pub use dpo::{dpo_loss, PreferencePair};
pub use entropic::{adapt_beta, entropic_weights, ess};
pub use gae::compute_gae;
pub use grpo::grpo_advantages;
pub use ppo::{ppo_clip_objective, ppo_surrogate, ppo_update, UpdateReport};
pub use reinforce::{reinforce_kl_loss, reinforce_returns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PpoGae,
    Grpo,
    Entropic,
    ReinforceKl,
    BestOfNBc,
    Dpo,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Algorithm::PpoGae => "ppo_gae",
            Algorithm::Grpo => "grpo",
            Algorithm::Entropic => "entropic",
            Algorithm::ReinforceKl => "reinforce_kl",
            Algorithm::BestOfNBc => "best_of_n_bc",
            Algorithm::Dpo => "dpo",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub beta_temperature: f64,
    pub kl_alpha: f64,
    pub ess_floor: f64,
    pub top_k: usize,
    /// Step size sized for desk-scale linear policies; production-scale
    /// models would want several orders of magnitude less.
    pub learning_rate: f64,
    pub value_loss_coef: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            beta_temperature: 1.0,
            kl_alpha: 0.05,
            ess_floor: 3.0,
            top_k: 2,
            learning_rate: 5.0,
            value_loss_coef: 0.05,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ((0.0..=1.0).contains(&self.gamma), "gamma in [0,1]"),
            ((0.0..=1.0).contains(&self.lambda), "lambda in [0,1]"),
            (self.clip_epsilon > 0.0, "clip_epsilon > 0"),
            (self.beta_temperature > 0.0, "beta_temperature > 0"),
            (self.kl_alpha >= 0.0, "kl_alpha >= 0"),
            (self.ess_floor > 1.0, "ess_floor > 1"),
            (self.top_k >= 1, "top_k >= 1"),
            (self.learning_rate > 0.0, "learning_rate > 0"),
            (self.value_loss_coef >= 0.0, "value_loss_coef >= 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(format!("algorithm config: {msg}")));
            }
        }
        Ok(())
    }
}

/// Objective `Σ_i c_i Σ_t log π(a_t|s_i)` with fixed per-rollout
/// coefficients, plus its adapter gradients. Backs the GRPO and entropic
/// update paths.
pub fn weighted_logp_objective<T: Real>(
    groups: &[RolloutGroup<T>],
    coeffs: &[Vec<T>],
    policy: &Policy<T>,
) -> Result<(T, AdapterGrads<T>)> {
    let mut grad_w = ndarray::Array2::zeros((policy.d_features(), policy.n_actions()));
    let mut objective = T::zero();
    for (group, group_coeffs) in groups.iter().zip(coeffs) {
        let lp = policy.log_probs(&group.state)?;
        let probs = lp.mapv(T::exp);
        for (rollout, &c) in group.rollouts.iter().zip(group_coeffs) {
            for &a in &rollout.actions {
                objective += c * lp[a];
                grad::add_logp_grad(&group.state, &probs, a, c, policy.temperature, &mut grad_w);
            }
        }
    }
    let mut grads = AdapterGrads::zeros_like(policy);
    grads.add_effective_weight_grad(policy, &grad_w);
    Ok((objective, grads))
}

fn group_coeffs_grpo<T: Real>(groups: &[RolloutGroup<T>]) -> Result<Vec<Vec<T>>> {
    let n_rollouts: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    let inv_n = T::one() / T::from_usize(n_rollouts.max(1)).unwrap();
    groups
        .iter()
        .map(|g| {
            let adv = grpo_advantages(&g.rewards())?;
            Ok(adv.into_iter().map(|a| a * inv_n).collect())
        })
        .collect()
}

fn group_coeffs_entropic<T: Real>(
    groups: &[RolloutGroup<T>],
    config: &AlgorithmConfig,
) -> Result<Vec<Vec<T>>> {
    let inv_g = T::one() / T::from_usize(groups.len().max(1)).unwrap();
    groups
        .iter()
        .map(|g| {
            let rewards = g.rewards();
            let beta = adapt_beta(
                &rewards,
                T::c(config.ess_floor.min(g.group_size() as f64)),
                T::c(config.beta_temperature),
            )?;
            Ok(entropic_weights(&rewards, beta)
                .into_iter()
                .map(|w| w * inv_g)
                .collect())
        })
        .collect()
}

/// Apply one gradient step of the chosen algorithm to the policy.
pub fn weight_update_step<T: Real>(
    algorithm: Algorithm,
    groups: &[RolloutGroup<T>],
    policy: &Policy<T>,
    config: &AlgorithmConfig,
) -> Result<(Policy<T>, UpdateReport)> {
    if groups.is_empty() {
        return Err(Error::Domain("weight update needs at least one group".into()));
    }
    let lr = T::c(config.learning_rate);
    let states: Vec<_> = groups.iter().map(|g| g.state.clone()).collect();
    let finish = |updated: Policy<T>, loss: T, grad_norm: T| -> Result<(Policy<T>, UpdateReport)> {
        let kl = updated.kl_to_base(&states)?;
        Ok((
            updated,
            UpdateReport {
                algorithm,
                loss: loss.to_f64().unwrap(),
                grad_norm: grad_norm.to_f64().unwrap(),
                kl_to_base: kl.to_f64().unwrap(),
            },
        ))
    };

    match algorithm {
        Algorithm::PpoGae => ppo_update(groups, policy, config),
        Algorithm::Grpo => {
            let coeffs = group_coeffs_grpo(groups)?;
            let (objective, grads) = weighted_logp_objective(groups, &coeffs, policy)?;
            let norm = grads.norm();
            let updated = policy.apply_gradient_step(&grads, lr)?;
            finish(updated, -objective, norm)
        }
        Algorithm::Entropic => {
            let coeffs = group_coeffs_entropic(groups, config)?;
            let (objective, grads) = weighted_logp_objective(groups, &coeffs, policy)?;
            let norm = grads.norm();
            let updated = policy.apply_gradient_step(&grads, lr)?;
            finish(updated, -objective, norm)
        }
        Algorithm::ReinforceKl => {
            let (loss, mut grads) =
                reinforce_kl_loss(groups, policy, T::c(config.gamma), T::c(config.kl_alpha))?;
            grads.scale(-T::one());
            let norm = grads.norm();
            let updated = policy.apply_gradient_step(&grads, lr)?;
            finish(updated, loss, norm)
        }
        Algorithm::BestOfNBc => {
            let mut selected = Vec::new();
            for group in groups {
                let rewards = group.rewards();
                let k = config.top_k.min(group.group_size());
                for idx in select_top_k(&rewards, k)? {
                    selected.push((&group.state, &group.rollouts[idx]));
                }
            }
            let (loss, mut grads) = bc_loss(&selected, policy)?;
            grads.scale(-T::one());
            let norm = grads.norm();
            let updated = policy.apply_gradient_step(&grads, lr)?;
            finish(updated, loss, norm)
        }
        Algorithm::Dpo => {
            let mut total_loss = T::zero();
            let mut grads = AdapterGrads::zeros_like(policy);
            let mut pairs = 0usize;
            for group in groups {
                let rewards = group.rewards();
                let order = select_top_k(&rewards, rewards.len())?;
                let (win, lose) = (order[0], order[order.len() - 1]);
                if rewards[win] <= rewards[lose] {
                    continue; // no ordinal signal in this group
                }
                let pair = PreferencePair {
                    state: group.state.clone(),
                    winner: group.rollouts[win].clone(),
                    loser: group.rollouts[lose].clone(),
                };
                let (loss, g) = dpo_loss(&pair, policy, T::c(config.beta_temperature))?;
                total_loss += loss;
                grads.left = &grads.left + &g.left;
                grads.right = &grads.right + &g.right;
                pairs += 1;
            }
            if pairs == 0 {
                let zero = AdapterGrads::zeros_like(policy);
                let updated = policy.apply_gradient_step(&zero, lr)?;
                return finish(updated, T::zero(), T::zero());
            }
            let inv = T::one() / T::from_usize(pairs).unwrap();
            grads.scale(-inv);
            let norm = grads.norm();
            let updated = policy.apply_gradient_step(&grads, lr)?;
            finish(updated, total_loss * inv, norm)
        }
    }
}
