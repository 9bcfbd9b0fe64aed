//! Best-of-N selection and behavioural-cloning distillation.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::policy::{AdapterGrads, Policy, RolloutEntry};

use super::grad::add_logp_grad;

/// Indices of the k highest-reward rollouts, ties broken by lower index.
pub fn select_top_k<T: Real>(rewards: &[T], k: usize) -> Result<Vec<usize>> {
    if k > rewards.len() {
        return Err(Error::TopKTooLarge {
            k,
            len: rewards.len(),
        });
    }
    let mut idx: Vec<usize> = (0..rewards.len()).collect();
    idx.sort_by(|&a, &b| {
        rewards[b]
            .partial_cmp(&rewards[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

/// Mean negative log-likelihood of the selected action sequences under
/// the current policy, with its gradient. No KL term; this is a pure
/// cold-start distillation loss.
pub fn bc_loss<T: Real>(
    selected: &[(&Array1<T>, &RolloutEntry<T>)],
    policy: &Policy<T>,
) -> Result<(T, AdapterGrads<T>)> {
    if selected.is_empty() {
        return Err(Error::Domain("bc_loss needs a non-empty selection".into()));
    }
    let mut grad_w = ndarray::Array2::zeros((policy.d_features(), policy.n_actions()));
    let mut loss = T::zero();
    let inv_n = T::one() / T::from_usize(selected.len()).unwrap();
    for (state, rollout) in selected {
        let lp = policy.log_probs(state)?;
        let probs = lp.mapv(T::exp);
        for &a in &rollout.actions {
            loss -= inv_n * lp[a];
            add_logp_grad(state, &probs, a, -inv_n, policy.temperature, &mut grad_w);
        }
    }
    let mut grads = AdapterGrads::zeros_like(policy);
    grads.add_effective_weight_grad(policy, &grad_w);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn top_k_examples() {
        assert_eq!(select_top_k(&[0.0, 0.0, 0.9, 0.2], 2).unwrap(), vec![2, 3]);
        assert_eq!(select_top_k(&[0.3, 0.1, 0.2], 3).unwrap(), vec![0, 2, 1]);
        assert_eq!(select_top_k(&[0.5; 4], 2).unwrap(), vec![0, 1]);
        assert!(select_top_k(&[0.5f64], 2).is_err());
    }

    fn entry(actions: Vec<usize>) -> RolloutEntry<f64> {
        let h = actions.len();
        RolloutEntry {
            actions,
            logp_current: vec![0.0; h],
            logp_base: vec![0.0; h],
            step_rewards: vec![0.0; h],
        }
    }

    #[test]
    fn uniform_policy_closed_form_loss() {
        let policy: Policy<f64> = Policy::new(Array2::zeros((2, 5)), 1, 1.0, 1);
        let state = Array1::from_vec(vec![1.0, -1.0]);
        let e = entry(vec![0, 3, 1]);
        let (loss, _) = bc_loss(&[(&state, &e)], &policy).unwrap();
        assert!((loss - 3.0 * 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn near_deterministic_policy_near_zero_loss() {
        let mut base: Array2<f64> = Array2::zeros((1, 3));
        base[(0, 2)] = 40.0;
        let policy = Policy::new(base, 1, 1.0, 1);
        let state = Array1::from_elem(1, 1.0);
        let e = entry(vec![2, 2]);
        let (loss, _) = bc_loss(&[(&state, &e)], &policy).unwrap();
        assert!(loss <= 1e-6, "loss = {loss}");
    }

    #[test]
    fn descending_bc_loss_raises_selected_likelihood() {
        let policy: Policy<f64> = Policy::new(Array2::zeros((1, 4)), 1, 1.0, 3);
        let state = Array1::from_elem(1, 1.0);
        let e = entry(vec![1]);
        let (_, mut grads) = bc_loss(&[(&state, &e)], &policy).unwrap();
        grads.scale(-1.0);
        let updated = policy.apply_gradient_step(&grads, 0.5).unwrap();
        let before = policy.action_distribution(&state).unwrap()[1];
        let after = updated.action_distribution(&state).unwrap()[1];
        assert!(after > before);
    }
}
