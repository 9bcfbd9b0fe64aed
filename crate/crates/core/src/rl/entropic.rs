//! Entropic advantage weighting: softmax reward redistribution with a
//! temperature adapted so the effective sample size stays above a floor.

use crate::error::{Error, Result};
use crate::num::Real;

const BETA_BRACKET_LO: f64 = 1e-3;
const BETA_BRACKET_HI: f64 = 1e6;
const ESS_TOL: f64 = 1e-6;

/// Normalised weights `w_i ∝ exp(r_i / β)`, max-subtracted for overflow
/// safety (which also makes them shift-invariant in the rewards).
pub fn entropic_weights<T: Real>(rewards: &[T], beta: T) -> Vec<T> {
    debug_assert!(beta > T::zero());
    let max = rewards.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = rewards.iter().map(|r| ((*r - max) / beta).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Effective sample size `1 / Σ w_i²` of normalised weights.
pub fn ess<T: Real>(weights: &[T]) -> T {
    let sq: T = weights.iter().map(|w| *w * *w).sum();
    T::one() / sq
}

/// Smallest β in the bracket whose weights keep ESS at or above the
/// floor. ESS is monotone increasing in β (uniform in the limit), so
/// bisection applies. Degenerate reward vectors admit any β and return
/// the configured default.
pub fn adapt_beta<T: Real>(rewards: &[T], ess_floor: T, default_beta: T) -> Result<T> {
    let g = rewards.len();
    if ess_floor > T::from_usize(g).unwrap() {
        return Err(Error::EssFloorTooHigh {
            floor: ess_floor.to_f64().unwrap(),
            group: g,
        });
    }
    let max = rewards.iter().cloned().fold(T::neg_infinity(), T::max);
    let min = rewards.iter().cloned().fold(T::infinity(), T::min);
    if max - min <= T::c(1e-12) {
        return Ok(default_beta);
    }
    let floor = ess_floor - T::c(ESS_TOL);
    let mut lo = T::c(BETA_BRACKET_LO);
    let mut hi = T::c(BETA_BRACKET_HI);
    if ess(&entropic_weights(rewards, lo)) >= floor {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::c(2.0);
        if ess(&entropic_weights(rewards, mid)) >= floor {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= T::c(1e-9) * hi {
            break;
        }
    }
    Ok(hi)
}
