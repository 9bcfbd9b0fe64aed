//! Deterministic dual-lever self-improvement loop.
//!
//! A feedback controller alternates two levers against synthetic,
//! verifier-scored task environments: scaffold updates (mutating one
//! harness knob while weights stay frozen) and weight updates (low-rank
//! adapter policy-gradient steps while the scaffold stays frozen). Every
//! run is bit-reproducible from (config, seed).
//!
//! Numeric core code (metric transforms, the policy, the RL objectives)
//! is generic over the scalar type; the environments, controller, and
//! orchestrator are pinned to `f64`.

pub mod config;
pub mod controller;
pub mod envs;
pub mod orchestrator;
pub mod store;
pub mod error;
pub mod hash;
pub mod metric;
pub mod num;
pub mod policy;
pub mod rl;
pub mod rng;
pub mod scaffold;
pub mod types;

pub use error::{Error, Result};
pub use num::Real;

/// Double-precision policy, the type every run uses.
pub type Policy64 = policy::Policy<f64>;
/// Single-precision policy for memory-constrained experimentation.
pub type Policy32 = policy::Policy<f32>;
pub type AdapterGrads64 = policy::AdapterGrads<f64>;
pub type AdapterGrads32 = policy::AdapterGrads<f32>;
