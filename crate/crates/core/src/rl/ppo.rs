//! Clipped-surrogate actor update with a learned value head.

use crate::error::{Error, Result};
use crate::num::Real;
use crate::policy::{AdapterGrads, Policy, RolloutGroup};

use super::gae::compute_gae;
use super::grad::add_logp_grad;
use super::reinforce::reinforce_returns;
use super::AlgorithmConfig;

/// Mean clipped surrogate `min(ρ Â, clip(ρ, 1±ε) Â)` over steps, with the
/// gradient w.r.t. each ratio. The gradient is zero on any step where the
/// clipped branch is active.
pub fn ppo_clip_objective<T: Real>(
    prob_ratios: &[T],
    advantages: &[T],
    clip_epsilon: T,
) -> Result<(T, Vec<T>)> {
    if prob_ratios.len() != advantages.len() {
        return Err(Error::ShapeMismatch(format!(
            "ratios {} vs advantages {}",
            prob_ratios.len(),
            advantages.len()
        )));
    }
    let n = T::from_usize(prob_ratios.len().max(1)).unwrap();
    let mut objective = T::zero();
    let mut grad = Vec::with_capacity(prob_ratios.len());
    for (&ratio, &adv) in prob_ratios.iter().zip(advantages) {
        let unclipped = ratio * adv;
        let clipped = ratio.max(T::one() - clip_epsilon).min(T::one() + clip_epsilon) * adv;
        if unclipped <= clipped {
            objective += unclipped / n;
            grad.push(adv / n);
        } else {
            objective += clipped / n;
            grad.push(T::zero());
        }
    }
    Ok((objective, grad))
}

/// Clipped-surrogate objective over rollout groups as a function of the
/// current policy, with adapter gradients for ascent. Old log-probs are
/// the ones recorded at sampling time; advantages are supplied by the
/// caller and held fixed.
pub fn ppo_surrogate<T: Real>(
    groups: &[RolloutGroup<T>],
    advantages: &[Vec<Vec<T>>],
    policy: &Policy<T>,
    clip_epsilon: T,
) -> Result<(T, AdapterGrads<T>)> {
    let mut grad_w = ndarray::Array2::zeros((policy.d_features(), policy.n_actions()));
    let mut objective = T::zero();
    let total_steps: usize = groups
        .iter()
        .flat_map(|g| g.rollouts.iter())
        .map(|r| r.actions.len())
        .sum();
    let inv_n = T::one() / T::from_usize(total_steps.max(1)).unwrap();
    for (gi, group) in groups.iter().enumerate() {
        let lp = policy.log_probs(&group.state)?;
        let probs = lp.mapv(T::exp);
        for (ri, rollout) in group.rollouts.iter().enumerate() {
            for (t, &a) in rollout.actions.iter().enumerate() {
                let adv = advantages[gi][ri][t];
                let ratio = (lp[a] - rollout.logp_current[t]).exp();
                let unclipped = ratio * adv;
                let clipped =
                    ratio.max(T::one() - clip_epsilon).min(T::one() + clip_epsilon) * adv;
                if unclipped <= clipped {
                    objective += inv_n * unclipped;
                    // d(ρ Â)/d logp = ρ Â
                    add_logp_grad(
                        &group.state,
                        &probs,
                        a,
                        inv_n * ratio * adv,
                        policy.temperature,
                        &mut grad_w,
                    );
                } else {
                    objective += inv_n * clipped;
                }
            }
        }
    }
    let mut grads = AdapterGrads::zeros_like(policy);
    grads.add_effective_weight_grad(policy, &grad_w);
    Ok((objective, grads))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UpdateReport {
    pub algorithm: super::Algorithm,
    pub loss: f64,
    pub grad_norm: f64,
    pub kl_to_base: f64,
}

/// One epoch of clipped-surrogate ascent on the adapter plus value-head
/// regression descent against empirical returns. The pre-call policy is
/// the "old" policy for the ratio semantics.
pub fn ppo_update<T: Real>(
    groups: &[RolloutGroup<T>],
    policy: &Policy<T>,
    config: &AlgorithmConfig,
) -> Result<(Policy<T>, UpdateReport)> {
    let gamma = T::c(config.gamma);
    let lambda = T::c(config.lambda);
    // GAE advantages from the pre-update value head; the state is fixed
    // over a rollout, so every step shares its value estimate.
    let mut advantages: Vec<Vec<Vec<T>>> = Vec::with_capacity(groups.len());
    let mut value_loss = T::zero();
    let mut value_grad = ndarray::Array1::<T>::zeros(policy.d_features());
    let mut total_steps = 0usize;
    for group in groups {
        let v = policy.value(&group.state)?;
        let mut per_group = Vec::with_capacity(group.rollouts.len());
        for rollout in &group.rollouts {
            let h = rollout.step_rewards.len();
            let mut values = vec![v; h];
            values.push(T::zero());
            per_group.push(compute_gae(&rollout.step_rewards, &values, gamma, lambda)?);
            let returns = reinforce_returns(&rollout.step_rewards, gamma);
            for &ret in &returns {
                let err = v - ret;
                value_loss += T::c(0.5) * err * err;
                // descent on squared error
                value_grad = value_grad - group.state.mapv(|s| s * err);
                total_steps += 1;
            }
        }
        advantages.push(per_group);
    }
    let inv_n = T::one() / T::from_usize(total_steps.max(1)).unwrap();
    value_loss *= inv_n;

    // Batch advantage standardisation: the surrogate only needs
    // relative preference between sampled actions, and centring keeps
    // the update scale independent of the value head's current bias.
    let flat: Vec<T> = advantages
        .iter()
        .flat_map(|g| g.iter().flat_map(|r| r.iter().cloned()))
        .collect();
    if flat.len() > 1 {
        let n = T::from_usize(flat.len()).unwrap();
        let mean = flat.iter().cloned().sum::<T>() / n;
        let var = flat.iter().map(|a| (*a - mean) * (*a - mean)).sum::<T>() / n;
        let std = var.sqrt();
        if std > T::c(1e-8) {
            for g in &mut advantages {
                for r in g {
                    for a in r {
                        *a = (*a - mean) / std;
                    }
                }
            }
        }
    }

    let (objective, mut grads) =
        ppo_surrogate(groups, &advantages, policy, T::c(config.clip_epsilon))?;
    grads.value = value_grad.mapv(|g| g * inv_n * T::c(config.value_loss_coef));
    let grad_norm = grads.norm();
    let updated = policy.apply_gradient_step(&grads, T::c(config.learning_rate))?;
    let states: Vec<_> = groups.iter().map(|g| g.state.clone()).collect();
    let kl = updated.kl_to_base(&states)?;
    let loss = T::c(config.value_loss_coef) * value_loss - objective;
    Ok((
        updated,
        UpdateReport {
            algorithm: super::Algorithm::PpoGae,
            loss: loss.to_f64().unwrap(),
            grad_norm: grad_norm.to_f64().unwrap(),
            kl_to_base: kl.to_f64().unwrap(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::RolloutEntry;
    use crate::rng;
    use ndarray::{Array1, Array2};

    #[test]
    fn clip_objective_examples() {
        let (obj, _) = ppo_clip_objective(&[1.0f64], &[0.7], 0.2).unwrap();
        assert!((obj - 0.7).abs() < 1e-12);

        let (obj, _) = ppo_clip_objective(&[1.5f64], &[1.0], 0.2).unwrap();
        assert!((obj - 1.2).abs() < 1e-12);

        // Both branches evaluated literally: min(0.5·(−1), 0.8·(−1)) = −0.8,
        // the clipped branch, so the ratio gradient is zero there.
        let (obj, grad) = ppo_clip_objective(&[0.5f64], &[-1.0], 0.2).unwrap();
        assert!((obj + 0.8).abs() < 1e-12);
        assert_eq!(grad[0], 0.0);
    }

    #[test]
    fn unclipped_region_equals_plain_surrogate() {
        let ratios = [0.9, 1.0, 1.1, 1.15];
        let advantages = [0.5, -0.3, 1.2, -2.0];
        let (obj, _) = ppo_clip_objective(&ratios, &advantages, 0.2).unwrap();
        let plain: f64 = ratios
            .iter()
            .zip(&advantages)
            .map(|(r, a)| r * a)
            .sum::<f64>()
            / 4.0;
        assert!((obj - plain).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(ppo_clip_objective(&[1.0f64], &[1.0, 2.0], 0.2).is_err());
    }

    fn bandit_groups(policy: &Policy<f64>, stream_id: u64) -> Vec<RolloutGroup<f64>> {
        let state = Array1::from_elem(1, 1.0);
        let mut stream = rng::stream(&[stream_id]);
        let mut rollouts = Vec::new();
        for _ in 0..8 {
            let mut e = policy.sample_rollout(&state, 1, &mut stream).unwrap();
            e.step_rewards = vec![if e.actions[0] == 0 { 1.0 } else { 0.0 }];
            rollouts.push(e);
        }
        vec![RolloutGroup { state, rollouts }]
    }

    #[test]
    fn zero_advantages_leave_adapter_unchanged() {
        let policy: Policy<f64> = Policy::new(Array2::zeros((1, 2)), 1, 1.0, 1);
        let state = Array1::from_elem(1, 1.0);
        let rollouts = (0..4)
            .map(|i| RolloutEntry {
                actions: vec![i % 2],
                logp_current: vec![0.5f64.ln()],
                logp_base: vec![0.5f64.ln()],
                step_rewards: vec![0.0],
            })
            .collect();
        let groups = vec![RolloutGroup { state, rollouts }];
        let mut cfg = AlgorithmConfig::default();
        cfg.learning_rate = 0.1;
        let (updated, _) = ppo_update(&groups, &policy, &cfg).unwrap();
        assert_eq!(updated.adapter_left, policy.adapter_left);
        assert_eq!(updated.adapter_right, policy.adapter_right);
    }

    #[test]
    fn bandit_converges_within_200_steps() {
        let mut policy: Policy<f64> = Policy::new(Array2::zeros((1, 2)), 1, 1.0, 7);
        let mut cfg = AlgorithmConfig::default();
        cfg.learning_rate = 0.2;
        let state = Array1::from_elem(1, 1.0);
        let mut p0 = 0.0;
        for step in 0..200 {
            let groups = bandit_groups(&policy, 1000 + step);
            let (next, _) = ppo_update(&groups, &policy, &cfg).unwrap();
            policy = next;
            p0 = policy.action_distribution(&state).unwrap()[0];
            if p0 > 0.9 {
                break;
            }
        }
        assert!(p0 > 0.9, "P(a0) after 200 steps = {p0}");
    }

    #[test]
    fn value_head_converges_to_constant_reward() {
        let mut policy: Policy<f64> = Policy::new(Array2::zeros((1, 2)), 1, 1.0, 9);
        let mut cfg = AlgorithmConfig::default();
        cfg.learning_rate = 0.2;
        cfg.value_loss_coef = 0.5;
        cfg.gamma = 1.0;
        let state = Array1::from_elem(1, 1.0);
        for step in 0..300 {
            let state = state.clone();
            let mut stream = rng::stream(&[50, step]);
            let rollouts = (0..4)
                .map(|_| {
                    let mut e = policy.sample_rollout(&state, 1, &mut stream).unwrap();
                    e.step_rewards = vec![0.7];
                    e
                })
                .collect();
            let groups = vec![RolloutGroup { state, rollouts }];
            let (next, _) = ppo_update(&groups, &policy, &cfg).unwrap();
            policy = next;
        }
        let v = policy.value(&state).unwrap();
        assert!((v - 0.7).abs() < 1e-2, "value = {v}");
    }
}
