//! Synthetic, seeded task environments with deterministic verifiers.
//!
//! Each environment mirrors a reward topology rather than any real
//! dataset: fine-grained class confusability, compile-failure sparse
//! rewards, and a smooth surface with a hidden structural bonus that
//! only the policy's action space can reach.

mod classify;
mod denoise;
mod kernel;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng;
use crate::scaffold::{FeatureView, InstanceTrace, Scaffold, Trajectory};
use crate::types::{AnswerFormat, FailureTag, Metrics, TaskSpec};

pub use classify::ClassifySim;
pub use denoise::DenoiseSim;
pub use kernel::KernelSim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Classify,
    Kernel,
    Denoise,
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Classify => f.write_str("classify"),
            EnvKind::Kernel => f.write_str("kernel"),
            EnvKind::Denoise => f.write_str("denoise"),
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(EnvKind::Classify),
            "kernel" => Ok(EnvKind::Kernel),
            "denoise" => Ok(EnvKind::Denoise),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

/// One evaluation or training instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    pub format: AnswerFormat,
    /// True class for classification tasks; unused elsewhere.
    pub true_label: usize,
    /// Instance-specific modulation of the reward surface.
    pub factor: f64,
    /// Times out when the scaffold's sampling cost exceeds the budget.
    pub slow: bool,
}

/// The environment interface contract every task implements. Verifiers
/// are deterministic in (seed, instance, action, scaffold); instance
/// sets are fixed for the run.
pub trait Environment: Send + Sync {
    fn kind(&self) -> EnvKind;
    fn task_spec(&self) -> &TaskSpec;
    fn feature_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Held-out instances the per-generation metric is computed on.
    fn eval_instances(&self) -> &[Instance];
    /// The regularisation set weight updates sample rollouts from.
    fn train_instances(&self) -> &[Instance];
    fn view_mask(&self, view: FeatureView) -> Vec<bool>;
    /// Deterministic verifier: reward and failure tag for one action.
    fn verify(&self, instance: &Instance, action: usize) -> (f64, FailureTag);
    /// Cheap candidate-ranking heuristic available to the scaffold's
    /// reranker. Deliberately weaker than the verifier.
    fn rerank_proxy(&self, instance: &Instance, action: usize) -> f64;
    /// Frozen base weight matrix the run's policy starts from.
    fn initial_base_weights(&self) -> Array2<f64>;
    fn describe_action(&self, action: usize) -> String;
    /// Per-instance sampling-cost budget before slow instances time out.
    fn cost_limit(&self) -> u32;
    fn content_hash(&self) -> String;
    /// Exhaustive-search optimum (test oracle): best action by mean
    /// reward over the evaluation set.
    fn brute_force_optimum(&self) -> Result<(usize, f64)>;
}

pub fn make_environment(kind: EnvKind, seed: u64) -> Box<dyn Environment> {
    match kind {
        EnvKind::Classify => Box::new(ClassifySim::new(seed)),
        EnvKind::Kernel => Box::new(KernelSim::new(seed)),
        EnvKind::Denoise => Box::new(DenoiseSim::new(seed)),
    }
}

/// Instance features under the scaffold's observation mask.
pub fn masked_state(env: &dyn Environment, scaffold: &Scaffold, instance: &Instance) -> Array1<f64> {
    let mask = env.view_mask(scaffold.knobs.feature_view);
    Array1::from_iter(
        instance
            .features
            .iter()
            .zip(&mask)
            .map(|(f, m)| if *m { *f } else { 0.0 }),
    )
}

/// Run every evaluation instance through the scaffold-mediated policy:
/// the scaffold controls feature exposure, parser acceptance, the retry
/// loop, and candidate reranking; the policy picks actions; the verifier
/// scores them. Failures become tags, never aborts.
pub fn evaluate(
    env: &dyn Environment,
    scaffold: &Scaffold,
    policy: &Policy<f64>,
    seed: u64,
    generation: u32,
) -> Result<(Trajectory, Metrics)> {
    scaffold.validate()?;
    let sampling_policy = match scaffold.knobs.temperature_override {
        Some(temp) if temp > 0.0 => {
            let mut p = policy.clone();
            p.temperature = temp;
            p
        }
        _ => policy.clone(),
    };
    let knobs = &scaffold.knobs;
    let cost = knobs.samples_per_instance * (knobs.retry_budget + 1);
    let mut traces = Vec::with_capacity(env.eval_instances().len());
    let mut rewards = Vec::with_capacity(env.eval_instances().len());
    for (idx, instance) in env.eval_instances().iter().enumerate() {
        let state = masked_state(env, scaffold, instance);
        let mut stream = rng::stream(&[seed, generation as u64, idx as u64]);
        let mut trace = InstanceTrace {
            instance_id: instance.id.clone(),
            state: state.to_vec(),
            actions: Vec::new(),
            tool_events: Vec::new(),
            extracted_answer: None,
            reward: 0.0,
            failure_tag: FailureTag::None,
        };

        if cost > env.cost_limit() && instance.slow {
            trace.failure_tag = FailureTag::Timeout;
            trace.tool_events.push("sampling_budget_exceeded".into());
        } else if !knobs.parser_strictness.accepts(instance.format) {
            // The parser cannot read this instance's output format; no
            // amount of resampling helps.
            let entry = sampling_policy.sample_rollout(&state, 1, &mut stream)?;
            trace.actions = entry.actions;
            trace.failure_tag = FailureTag::ParseFailure;
        } else {
            for attempt in 0..=knobs.retry_budget {
                let mut candidates = Vec::with_capacity(knobs.samples_per_instance as usize);
                for _ in 0..knobs.samples_per_instance {
                    let entry = sampling_policy.sample_rollout(&state, 1, &mut stream)?;
                    candidates.push(entry.actions[0]);
                }
                let chosen = if knobs.reranker_enabled {
                    let mut best = candidates[0];
                    let mut best_score = env.rerank_proxy(instance, best);
                    for &c in &candidates[1..] {
                        let s = env.rerank_proxy(instance, c);
                        if s > best_score {
                            best = c;
                            best_score = s;
                        }
                    }
                    best
                } else {
                    candidates[0]
                };
                let (reward, tag) = env.verify(instance, chosen);
                trace.actions.push(chosen);
                if tag == FailureTag::ToolError && attempt < knobs.retry_budget {
                    trace.tool_events.push("tool_error_retry".into());
                    continue;
                }
                trace.extracted_answer = Some(env.describe_action(chosen));
                trace.reward = reward;
                trace.failure_tag = tag;
                break;
            }
        }
        rewards.push(trace.reward);
        traces.push(trace);
    }
    let mut failure_counts: BTreeMap<FailureTag, u64> =
        FailureTag::ALL.iter().map(|t| (*t, 0)).collect();
    for t in &traces {
        *failure_counts.get_mut(&t.failure_tag).unwrap() += 1;
    }
    let primary = if rewards.is_empty() {
        0.0
    } else {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    };
    let metrics = Metrics::from_rewards(generation, primary, &rewards, failure_counts);
    Ok((Trajectory { generation, traces }, metrics))
}

/// Dump the instance set in a line-delimited text form for inspection.
pub fn dump_instances(env: &dyn Environment) -> String {
    let mut out = String::new();
    for (split, instances) in [("train", env.train_instances()), ("eval", env.eval_instances())] {
        for inst in instances {
            out.push_str(&format!(
                "{}\t{}\t{:?}\tlabel={}\tfactor={:.6}\tslow={}\n",
                split, inst.id, inst.format, inst.true_label, inst.factor, inst.slow
            ));
        }
    }
    out
}

/// Standard-normal draw; Box-Muller over the stream's uniforms.
pub(crate) fn normal(stream: &mut impl Rng) -> f64 {
    let u1: f64 = stream.gen_range(1e-12..1.0);
    let u2: f64 = stream.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
