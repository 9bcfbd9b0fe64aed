//! Monte-Carlo returns and the REINFORCE + KL-to-base objective.

use crate::error::Result;
use crate::num::Real;
use crate::policy::{AdapterGrads, Policy, RolloutGroup};

use super::grad::{add_kl_grad, add_logp_grad};

/// Discounted suffix sums `R_t = Σ_{t'≥t} γ^{t'−t} r_{t'}`.
pub fn reinforce_returns<T: Real>(rewards: &[T], gamma: T) -> Vec<T> {
    let mut returns = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    returns
}

/// REINFORCE loss with a KL penalty against the frozen base:
/// `−E[Σ_t R_t log π(a_t|s)] + α · mean_s KL(π_θ ‖ π_θ₀)`.
///
/// Returns the loss value and its gradient (descent direction is the
/// negative of the returned gradient applied with a positive rate; the
/// caller negates).
pub fn reinforce_kl_loss<T: Real>(
    groups: &[RolloutGroup<T>],
    policy: &Policy<T>,
    gamma: T,
    kl_alpha: T,
) -> Result<(T, AdapterGrads<T>)> {
    let mut grad_w = ndarray::Array2::zeros((policy.d_features(), policy.n_actions()));
    let mut loss = T::zero();
    let n_rollouts: usize = groups.iter().map(|g| g.rollouts.len()).sum();
    let inv_n = T::one() / T::from_usize(n_rollouts.max(1)).unwrap();
    for group in groups {
        let lp = policy.log_probs(&group.state)?;
        let probs = lp.mapv(T::exp);
        for rollout in &group.rollouts {
            let returns = reinforce_returns(&rollout.step_rewards, gamma);
            for (t, &a) in rollout.actions.iter().enumerate() {
                loss -= inv_n * returns[t] * lp[a];
                // d(-R logp)/dW
                add_logp_grad(&group.state, &probs, a, -inv_n * returns[t], policy.temperature, &mut grad_w);
            }
        }
    }
    if kl_alpha > T::zero() {
        let states: Vec<_> = groups.iter().map(|g| g.state.clone()).collect();
        loss += kl_alpha * policy.kl_to_base(&states)?;
        let per_state = kl_alpha / T::from_usize(groups.len()).unwrap();
        for group in groups {
            add_kl_grad(policy, &group.state, per_state, &mut grad_w)?;
        }
    }
    let mut grads = AdapterGrads::zeros_like(policy);
    grads.add_effective_weight_grad(policy, &grad_w);
    Ok((loss, grads))
}
