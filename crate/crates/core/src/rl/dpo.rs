//! Direct preference optimisation on verifier rankings.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::num::Real;
use crate::policy::{AdapterGrads, Policy, RolloutEntry};

use super::grad::add_logp_grad;

/// A winning and a losing rollout sampled from the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PreferencePair<T: Real> {
    pub state: Array1<T>,
    pub winner: RolloutEntry<T>,
    pub loser: RolloutEntry<T>,
}

/// `−log σ(β [Δ⁺ − Δ⁻])` where `Δ = Σ_t (log π_θ − log π_θ₀)` over the
/// whole rollout. Sequence log-probs are summed, not averaged.
pub fn dpo_loss<T: Real>(
    pair: &PreferencePair<T>,
    policy: &Policy<T>,
    beta: T,
) -> Result<(T, AdapterGrads<T>)> {
    let lp = policy.log_probs(&pair.state)?;
    let lq = policy.base_log_probs(&pair.state)?;
    let probs = lp.mapv(T::exp);

    let margin = |entry: &RolloutEntry<T>| -> T {
        entry.actions.iter().map(|&a| lp[a] - lq[a]).sum()
    };
    let x = beta * (margin(&pair.winner) - margin(&pair.loser));
    let sigma = T::one() / (T::one() + (-x).exp());
    let loss = -sigma.ln();

    // d loss / d Δ⁺ = −β (1 − σ); d loss / d Δ⁻ = +β (1 − σ)
    let coeff = beta * (T::one() - sigma);
    let mut grad_w = ndarray::Array2::zeros((policy.d_features(), policy.n_actions()));
    for &a in &pair.winner.actions {
        add_logp_grad(&pair.state, &probs, a, -coeff, policy.temperature, &mut grad_w);
    }
    for &a in &pair.loser.actions {
        add_logp_grad(&pair.state, &probs, a, coeff, policy.temperature, &mut grad_w);
    }
    let mut grads = AdapterGrads::zeros_like(policy);
    grads.add_effective_weight_grad(policy, &grad_w);
    Ok((loss, grads))
}
