//! Shared analytic-gradient accumulation for the softmax-linear policy.
//!
//! All objectives reduce to coefficients on per-step score functions
//! `∇_W log π(a|s) = s ⊗ (e_a − π(s)) / τ` plus, for the KL penalty, the
//! exact categorical-KL gradient. Gradients are accumulated against the
//! effective weight matrix and converted to adapter-factor gradients in
//! one place.

use ndarray::{Array1, Array2};

use crate::num::Real;
use crate::policy::Policy;

/// Accumulate `coeff · ∇_W log π(action|state)` into `grad_w`.
pub fn add_logp_grad<T: Real>(
    state: &Array1<T>,
    probs: &Array1<T>,
    action: usize,
    coeff: T,
    temperature: T,
    grad_w: &mut Array2<T>,
) {
    let scale = coeff / temperature;
    for i in 0..state.len() {
        let si = state[i] * scale;
        if si == T::zero() {
            continue;
        }
        for j in 0..probs.len() {
            grad_w[(i, j)] -= si * probs[j];
        }
        grad_w[(i, action)] += si;
    }
}

/// Accumulate `coeff · ∇_W KL(π_θ(·|s) ‖ π_θ₀(·|s))` into `grad_w`.
pub fn add_kl_grad<T: Real>(
    policy: &Policy<T>,
    state: &Array1<T>,
    coeff: T,
    grad_w: &mut Array2<T>,
) -> crate::error::Result<()> {
    let lp = policy.log_probs(state)?;
    let lq = policy.base_log_probs(state)?;
    let n = lp.len();
    let mut kl = T::zero();
    for k in 0..n {
        kl += lp[k].exp() * (lp[k] - lq[k]);
    }
    // d KL / d z_k = p_k ((ln p_k − ln q_k) − KL), z the current logits
    let scale = coeff / policy.temperature;
    for i in 0..state.len() {
        let si = state[i] * scale;
        if si == T::zero() {
            continue;
        }
        for k in 0..n {
            let dk = lp[k].exp() * ((lp[k] - lq[k]) - kl);
            grad_w[(i, k)] += si * dk;
        }
    }
    Ok(())
}
