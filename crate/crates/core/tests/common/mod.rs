//! Shared finite-difference gradient checking against the analytic
//! adapter gradients, on small random policies.

#![allow(dead_code)]

use leverloop_core::policy::{AdapterGrads, Policy, RolloutEntry, RolloutGroup};
use leverloop_core::rng;
use ndarray::{Array1, Array2};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const D: usize = 3;
pub const N: usize = 3;
pub const RANK: usize = 2;

/// A small random policy: 3 features, 3 actions, rank-2 adapter, with
/// every parameter block away from zero so the chain rule through both
/// adapter factors is exercised.
pub fn random_policy(seed: u64) -> Policy<f64> {
    let mut stream = rng::stream(&[seed, 0xF0]);
    let base = Array2::from_shape_fn((D, N), |_| stream.gen_range(-1.0..1.0));
    let mut policy = Policy::new(base, RANK, 1.0, seed);
    policy.adapter_left = Array2::from_shape_fn((D, RANK), |_| stream.gen_range(-0.5..0.5));
    policy.adapter_right = Array2::from_shape_fn((RANK, N), |_| stream.gen_range(-0.5..0.5));
    policy.value_head = Array1::from_shape_fn(D, |_| stream.gen_range(-0.3..0.3));
    if seed % 2 == 1 {
        policy.temperature = 1.6;
    }
    policy
}

/// Random rollout groups sampled off the given policy. `logp_current`
/// is nudged slightly off the policy's own log-probs so importance
/// ratios sit strictly inside the PPO clip region (no kinks near the
/// finite-difference stencil).
pub fn random_groups(policy: &Policy<f64>, seed: u64, n_groups: usize) -> Vec<RolloutGroup<f64>> {
    let mut stream = rng::stream(&[seed, 0xF1]);
    (0..n_groups)
        .map(|_| {
            let state = Array1::from_shape_fn(D, |_| stream.gen_range(-1.0..1.0));
            let lp = policy.log_probs(&state).unwrap();
            let rollouts = (0..3)
                .map(|_| {
                    let actions: Vec<usize> = (0..2).map(|_| stream.gen_range(0..N)).collect();
                    RolloutEntry {
                        logp_current: actions
                            .iter()
                            .map(|&a| lp[a] + stream.gen_range(-0.05..0.05))
                            .collect(),
                        logp_base: actions.iter().map(|&a| lp[a]).collect(),
                        step_rewards: actions.iter().map(|_| stream.gen_range(-1.0..1.0)).collect(),
                        actions,
                    }
                })
                .collect();
            RolloutGroup { state, rollouts }
        })
        .collect()
}

fn perturbed(policy: &Policy<f64>, block: usize, i: usize, j: usize, h: f64) -> Policy<f64> {
    let mut p = policy.clone();
    match block {
        0 => p.adapter_left[(i, j)] += h,
        _ => p.adapter_right[(i, j)] += h,
    }
    p
}

/// Central finite differences of `f` over both adapter blocks, compared
/// against `analytic` as a whole-vector relative error.
pub fn fd_relative_error<F>(policy: &Policy<f64>, analytic: &AdapterGrads<f64>, f: F) -> f64
where
    F: Fn(&Policy<f64>) -> f64,
{
    let mut diff_sq = 0.0;
    let mut norm_sq = 0.0;
    let blocks = [(0usize, D, RANK), (1usize, RANK, N)];
    for (block, rows, cols) in blocks {
        for i in 0..rows {
            for j in 0..cols {
                let plus = f(&perturbed(policy, block, i, j, FD_STEP));
                let minus = f(&perturbed(policy, block, i, j, -FD_STEP));
                let fd = (plus - minus) / (2.0 * FD_STEP);
                let g = match block {
                    0 => analytic.left[(i, j)],
                    _ => analytic.right[(i, j)],
                };
                diff_sq += (fd - g) * (fd - g);
                norm_sq += g * g;
            }
        }
    }
    diff_sq.sqrt() / norm_sq.sqrt().max(1e-8)
}
