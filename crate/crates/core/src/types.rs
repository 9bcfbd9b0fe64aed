//! Shared domain types and generation bookkeeping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::{Algorithm, AlgorithmConfig};

/// Reward structure a task exposes; fixed for the life of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    DensePerStep,
    TerminalScalar,
    OrdinalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricDirection {
    HigherBetter,
    LowerBetter,
}

/// Per-instance failure classification. Variant order is the
/// deterministic tie-break order for dominant-tag selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureTag {
    None,
    ParseFailure,
    ToolError,
    WrongAnswer,
    Timeout,
    InvalidConfig,
}

impl FailureTag {
    pub const ALL: [FailureTag; 6] = [
        FailureTag::None,
        FailureTag::ParseFailure,
        FailureTag::ToolError,
        FailureTag::WrongAnswer,
        FailureTag::Timeout,
        FailureTag::InvalidConfig,
    ];
}

/// Output format an instance demands from the agent; what the scaffold
/// parser must be able to accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    Plain,
    Noisy,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub id: String,
    pub format: AnswerFormat,
}

/// Task description handed to the scaffold initialiser and controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub description: String,
    /// The regularisation set: every knob choice must stay
    /// parse-compatible with all of these.
    pub sample_instances: Vec<InstanceDescriptor>,
    pub reference_artifacts: Option<Vec<String>>,
    pub reward_kind: RewardKind,
    pub metric_direction: MetricDirection,
    /// Aspirational metric for this task; regression-risk diagnosis
    /// compares the current metric against a fraction of it.
    pub target_metric: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_instances.is_empty() {
            return Err(Error::Config("sample_instances must be non-empty".into()));
        }
        Ok(())
    }
}

pub const HISTOGRAM_BUCKETS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBucket {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

/// Per-generation evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub generation: u32,
    pub primary_metric: f64,
    pub reward_histogram: Vec<HistogramBucket>,
    pub zero_reward_fraction: f64,
    pub failure_counts: BTreeMap<FailureTag, u64>,
}

impl Metrics {
    /// Build a summary from raw per-instance rewards. Histogram uses 20
    /// equal-width buckets over the observed range; a degenerate range
    /// collapses to one bucket.
    pub fn from_rewards(
        generation: u32,
        primary_metric: f64,
        rewards: &[f64],
        failure_counts: BTreeMap<FailureTag, u64>,
    ) -> Self {
        let n = rewards.len();
        let zero_count = rewards.iter().filter(|r| **r == 0.0).count();
        let zero_reward_fraction = if n == 0 { 0.0 } else { zero_count as f64 / n as f64 };
        let reward_histogram = build_histogram(rewards);
        Metrics {
            generation,
            primary_metric,
            reward_histogram,
            zero_reward_fraction,
            failure_counts,
        }
    }

    pub fn scored_count(&self) -> u64 {
        self.reward_histogram.iter().map(|b| b.count).sum()
    }

    /// Mean reward estimated from the histogram. Bucket mass sits at the
    /// midpoint except for rewards that are exactly zero, whose count is
    /// known from `zero_reward_fraction` and contributes exactly zero.
    pub fn mean_reward_estimate(&self) -> f64 {
        let n = self.scored_count();
        if n == 0 {
            return 0.0;
        }
        let zero_count = (self.zero_reward_fraction * n as f64).round();
        let mut sum = 0.0;
        let mut zero_remaining = zero_count;
        for b in &self.reward_histogram {
            let mid = 0.5 * (b.lo + b.hi);
            let mut count = b.count as f64;
            if b.lo <= 0.0 && 0.0 <= b.hi && zero_remaining > 0.0 {
                let z = zero_remaining.min(count);
                count -= z;
                zero_remaining -= z;
            }
            sum += mid * count;
        }
        sum / n as f64
    }

    /// Fisher population skewness of the histogram-midpoint distribution.
    /// Invariant under affine reward transforms, which is all the
    /// algorithm selector needs.
    pub fn reward_skewness(&self) -> f64 {
        let n: u64 = self.scored_count();
        if n == 0 {
            return 0.0;
        }
        let nf = n as f64;
        let mean: f64 = self
            .reward_histogram
            .iter()
            .map(|b| 0.5 * (b.lo + b.hi) * b.count as f64)
            .sum::<f64>()
            / nf;
        let mut m2 = 0.0;
        let mut m3 = 0.0;
        for b in &self.reward_histogram {
            let d = 0.5 * (b.lo + b.hi) - mean;
            let c = b.count as f64;
            m2 += c * d * d;
            m3 += c * d * d * d;
        }
        m2 /= nf;
        m3 /= nf;
        if m2 < 1e-18 {
            0.0
        } else {
            m3 / m2.powf(1.5)
        }
    }
}

pub fn build_histogram(rewards: &[f64]) -> Vec<HistogramBucket> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let lo = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-300 {
        return vec![HistogramBucket {
            lo,
            hi,
            count: rewards.len() as u64,
        }];
    }
    let width = (hi - lo) / HISTOGRAM_BUCKETS as f64;
    let mut counts = [0u64; HISTOGRAM_BUCKETS];
    for &r in rewards {
        let idx = (((r - lo) / width) as usize).min(HISTOGRAM_BUCKETS - 1);
        counts[idx] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramBucket {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    HarnessUpdate,
    WeightUpdate,
}

/// One loop step: what was done and what it changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: u32,
    pub action: ActionKind,
    pub algorithm: Option<Algorithm>,
    pub metrics_before: Metrics,
    pub metrics_after: Metrics,
    pub report: String,
}

impl GenerationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.metrics_after.generation != self.metrics_before.generation + 1 {
            return Err(Error::Config(
                "metrics_after.generation must be metrics_before.generation + 1".into(),
            ));
        }
        if (self.algorithm.is_some()) != (self.action == ActionKind::WeightUpdate) {
            return Err(Error::Config(
                "algorithm must be present iff action is weight_update".into(),
            ));
        }
        Ok(())
    }
}

/// Outer-loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub max_generations: u32,
    pub plateau_window: usize,
    pub plateau_rel_threshold: f64,
    pub seed: u64,
    /// Update steps that make up one weight-update generation.
    pub weight_steps_per_generation: u32,
    /// States sampled per weight-update step.
    pub groups_per_step: usize,
    /// Rollouts per group (G).
    pub rollout_group_size: usize,
    pub adapter_rank: usize,
    /// Sampling temperature for training rollouts. Evaluation always
    /// runs the policy at its own temperature; a higher rollout
    /// temperature keeps exploration alive when the logits are sharp.
    pub train_temperature: f64,
    pub algorithm: AlgorithmConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_generations: 40,
            plateau_window: 3,
            plateau_rel_threshold: 0.01,
            seed: 0,
            weight_steps_per_generation: 25,
            groups_per_step: 8,
            rollout_group_size: 8,
            adapter_rank: 4,
            train_temperature: 3.0,
            algorithm: AlgorithmConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_generations < 1 {
            return Err(Error::Config("max_generations must be >= 1".into()));
        }
        if self.plateau_window < 2 {
            return Err(Error::Config("plateau_window must be >= 2".into()));
        }
        if self.rollout_group_size < 2 {
            return Err(Error::Config("rollout_group_size must be >= 2".into()));
        }
        if self.train_temperature <= 0.0 {
            return Err(Error::Config("train_temperature must be > 0".into()));
        }
        self.algorithm.validate()
    }
}
