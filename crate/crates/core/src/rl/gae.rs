//! Generalized advantage estimation.

use crate::error::{Error, Result};
use crate::num::Real;

/// Exponentially-weighted sum of TD residuals. `values` carries one
/// terminal bootstrap entry beyond `rewards` (zero for episodic ends).
pub fn compute_gae<T: Real>(rewards: &[T], values: &[T], gamma: T, lambda: T) -> Result<Vec<T>> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "values length {} must be rewards length {} + 1",
            values.len(),
            rewards.len()
        )));
    }
    let mut advantages = vec![T::zero(); rewards.len()];
    let mut acc = T::zero();
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        advantages[t] = acc;
    }
    Ok(advantages)
}
