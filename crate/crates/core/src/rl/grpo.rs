//! Group-relative advantage normalisation.

use crate::error::{Error, Result};
use crate::num::Real;

const DEGENERATE_STD: f64 = 1e-8;

/// Standardise rewards within a rollout group: `(r_i − r̄) / σ_r` with
/// population std. A degenerate group (σ below 1e-8) carries no signal
/// and maps to all-zero advantages.
pub fn grpo_advantages<T: Real>(rewards: &[T]) -> Result<Vec<T>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall {
            need: 2,
            got: rewards.len(),
        });
    }
    let n = T::from_usize(rewards.len()).unwrap();
    let mean = rewards.iter().cloned().sum::<T>() / n;
    let var = rewards
        .iter()
        .map(|r| (*r - mean) * (*r - mean))
        .sum::<T>()
        / n;
    let std = var.sqrt();
    if std <= T::c(DEGENERATE_STD) {
        return Ok(vec![T::zero(); rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (*r - mean) / std).collect())
}
