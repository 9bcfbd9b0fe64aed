//! The decision core: plateau detection, lever selection, reward-shape
//! diagnosis, and algorithm selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::Algorithm;
use crate::types::{ActionKind, LoopConfig, Metrics, MetricDirection, RewardKind, TaskSpec};

/// Declared operating constants (not values from any benchmark).
pub const MEAN_REWARD_FLOOR: f64 = 0.02;
pub const SKEW_THRESHOLD: f64 = 2.0;
pub const TARGET_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardDiagnosis {
    pub density: RewardKind,
    pub zero_fraction: f64,
    pub skewness: f64,
    pub near_zero_expectation: bool,
    pub regression_risk: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    HarnessSearch,
    WeightTraining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub metric_history: Vec<(u32, f64)>,
    pub last_action: Option<ActionKind>,
    pub phase: Phase,
    /// Index into `metric_history` where the current phase began; the
    /// plateau rule only sees the sub-history from here on.
    pub phase_start: usize,
}

impl ControllerState {
    pub fn new() -> Self {
        ControllerState {
            metric_history: Vec::new(),
            last_action: None,
            phase: Phase::HarnessSearch,
            phase_start: 0,
        }
    }

    pub fn push_metric(&mut self, generation: u32, metric: f64) -> Result<()> {
        if let Some(&(last_gen, _)) = self.metric_history.last() {
            if generation != last_gen + 1 {
                return Err(Error::Run(format!(
                    "metric history gap: generation {generation} after {last_gen}"
                )));
            }
        } else if generation != 1 {
            return Err(Error::Run("metric history must start at generation 1".into()));
        }
        self.metric_history.push((generation, metric));
        Ok(())
    }
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::new()
    }
}

/// True iff the best metric in the last `window` generations improves on
/// the best metric before that window by less than `rel_threshold` in
/// relative terms. Needs at least one pre-window generation; ties count
/// as no improvement.
pub fn detect_plateau(
    metric_history: &[f64],
    window: usize,
    rel_threshold: f64,
    direction: MetricDirection,
) -> bool {
    assert!(window >= 2, "plateau window must be >= 2");
    if metric_history.len() < window + 1 {
        return false;
    }
    let split = metric_history.len() - window;
    let best = |vals: &[f64]| -> f64 {
        match direction {
            MetricDirection::HigherBetter => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            MetricDirection::LowerBetter => vals.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    };
    let best_pre = best(&metric_history[..split]);
    let best_win = best(&metric_history[split..]);
    let gain = match direction {
        MetricDirection::HigherBetter => best_win - best_pre,
        MetricDirection::LowerBetter => best_pre - best_win,
    };
    let rel = gain / best_pre.abs().max(1e-12);
    rel < rel_threshold
}

/// Harness updates until the plateau fires; then weight updates until a
/// weight-phase plateau fires; and so on, interleaving freely.
pub fn select_action(
    state: &mut ControllerState,
    config: &LoopConfig,
    direction: MetricDirection,
) -> ActionKind {
    assert!(
        !state.metric_history.is_empty(),
        "select_action needs at least one completed generation"
    );
    let sub: Vec<f64> = state.metric_history[state.phase_start..]
        .iter()
        .map(|(_, m)| *m)
        .collect();
    if detect_plateau(&sub, config.plateau_window, config.plateau_rel_threshold, direction) {
        state.phase = match state.phase {
            Phase::HarnessSearch => Phase::WeightTraining,
            Phase::WeightTraining => Phase::HarnessSearch,
        };
        // The latest metric seeds the new phase's sub-history.
        state.phase_start = state.metric_history.len() - 1;
    }
    let action = match state.phase {
        Phase::HarnessSearch => ActionKind::HarnessUpdate,
        Phase::WeightTraining => ActionKind::WeightUpdate,
    };
    state.last_action = Some(action);
    action
}

/// Diagnosis fields from the latest generation's metrics and the task's
/// declared reward kind.
pub fn diagnose(metrics_history: &[Metrics], task_spec: &TaskSpec) -> Result<RewardDiagnosis> {
    let latest = metrics_history
        .last()
        .ok_or_else(|| Error::Run("diagnose needs at least one generation of metrics".into()))?;
    let mean = latest.mean_reward_estimate();
    let regression_risk = match task_spec.metric_direction {
        MetricDirection::HigherBetter => {
            latest.primary_metric >= TARGET_FRACTION * task_spec.target_metric
        }
        MetricDirection::LowerBetter => {
            latest.primary_metric <= task_spec.target_metric / TARGET_FRACTION
        }
    };
    Ok(RewardDiagnosis {
        density: task_spec.reward_kind,
        zero_fraction: latest.zero_reward_fraction,
        skewness: latest.reward_skewness(),
        near_zero_expectation: mean < MEAN_REWARD_FLOOR,
        regression_risk,
    })
}

/// Fixed priority order resolving overlapping selection conditions:
/// cold-start outranks everything, ordinal signal forces DPO, heavy
/// right-skew forces entropic weighting, dense rewards go to
/// REINFORCE+KL under regression risk and PPO otherwise, and everything
/// else is GRPO.
pub fn select_algorithm(diagnosis: &RewardDiagnosis) -> Algorithm {
    if diagnosis.near_zero_expectation {
        Algorithm::BestOfNBc
    } else if diagnosis.density == RewardKind::OrdinalOnly {
        Algorithm::Dpo
    } else if diagnosis.skewness > SKEW_THRESHOLD {
        Algorithm::Entropic
    } else if diagnosis.density == RewardKind::DensePerStep && diagnosis.regression_risk {
        Algorithm::ReinforceKl
    } else if diagnosis.density == RewardKind::DensePerStep {
        Algorithm::PpoGae
    } else {
        Algorithm::Grpo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AnswerFormat, InstanceDescriptor};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn task(kind: RewardKind, target: f64) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            description: String::new(),
            sample_instances: vec![InstanceDescriptor {
                id: "s0".into(),
                format: AnswerFormat::Plain,
            }],
            reference_artifacts: None,
            reward_kind: kind,
            metric_direction: MetricDirection::HigherBetter,
            target_metric: target,
        }
    }

    #[test]
    fn geometric_improvement_never_plateaus() {
        let mut history = Vec::new();
        let mut v = 1.0;
        for _ in 0..12 {
            history.push(v);
            v *= 1.10;
            assert!(!detect_plateau(&history, 3, 0.01, MetricDirection::HigherBetter));
        }
    }

    #[test]
    fn constant_metric_plateaus() {
        let history = vec![0.5; 4];
        assert!(detect_plateau(&history, 3, 0.01, MetricDirection::HigherBetter));
    }

    #[test]
    fn window_rule_example() {
        let history = [1.00, 1.05, 1.051, 1.0515, 1.0516];
        assert!(detect_plateau(&history, 3, 0.01, MetricDirection::HigherBetter));
    }

    #[test]
    fn lower_better_direction() {
        let improving = [10.0, 8.0, 6.0, 4.0, 2.0];
        assert!(!detect_plateau(&improving, 3, 0.01, MetricDirection::LowerBetter));
        let stalled = [10.0, 9.99, 9.99, 9.99];
        assert!(detect_plateau(&stalled, 3, 0.01, MetricDirection::LowerBetter));
    }

    #[test]
    fn action_starts_with_harness_and_interleaves() {
        let config = LoopConfig {
            plateau_window: 2,
            plateau_rel_threshold: 0.01,
            ..LoopConfig::default()
        };
        let mut state = ControllerState::new();
        state.push_metric(1, 1.0).unwrap();
        assert_eq!(
            select_action(&mut state, &config, MetricDirection::HigherBetter),
            ActionKind::HarnessUpdate
        );
        // Flat history: plateau fires, switch to weight updates.
        state.push_metric(2, 1.0).unwrap();
        state.push_metric(3, 1.0).unwrap();
        assert_eq!(
            select_action(&mut state, &config, MetricDirection::HigherBetter),
            ActionKind::WeightUpdate
        );
        assert_eq!(state.phase, Phase::WeightTraining);
        // Weight phase also stalls: revert to harness updates.
        state.push_metric(4, 1.0).unwrap();
        state.push_metric(5, 1.0).unwrap();
        assert_eq!(
            select_action(&mut state, &config, MetricDirection::HigherBetter),
            ActionKind::HarnessUpdate
        );
    }

    #[test]
    fn never_weight_update_on_generation_one() {
        let config = LoopConfig::default();
        let mut state = ControllerState::new();
        state.push_metric(1, 0.0).unwrap();
        assert_eq!(
            select_action(&mut state, &config, MetricDirection::HigherBetter),
            ActionKind::HarnessUpdate
        );
    }

    #[test]
    fn history_gap_rejected() {
        let mut state = ControllerState::new();
        state.push_metric(1, 0.5).unwrap();
        assert!(state.push_metric(3, 0.6).is_err());
        let mut fresh = ControllerState::new();
        assert!(fresh.push_metric(2, 0.5).is_err());
    }

    #[test]
    fn diagnose_two_point_distribution() {
        let mut rewards = vec![0.0; 95];
        rewards.extend(vec![1.0; 5]);
        let m = Metrics::from_rewards(1, 0.05, &rewards, BTreeMap::new());
        let d = diagnose(&[m], &task(RewardKind::TerminalScalar, 1.0)).unwrap();
        assert!((d.zero_fraction - 0.95).abs() < 1e-12);
        assert!(d.skewness > 4.0 && d.skewness < 4.3);
        assert!(!d.near_zero_expectation); // mean 0.05 > 0.02
    }

    #[test]
    fn diagnose_ordinal_passthrough() {
        let m = Metrics::from_rewards(1, 0.5, &[0.1, 0.9, 0.5], BTreeMap::new());
        let d = diagnose(&[m], &task(RewardKind::OrdinalOnly, 1.0)).unwrap();
        assert_eq!(d.density, RewardKind::OrdinalOnly);
        assert_eq!(select_algorithm(&d), Algorithm::Dpo);
    }

    #[test]
    fn selection_examples() {
        let base = RewardDiagnosis {
            density: RewardKind::TerminalScalar,
            zero_fraction: 0.0,
            skewness: 0.0,
            near_zero_expectation: false,
            regression_risk: false,
        };
        // mean reward ~ 0.001: cold start
        let d = RewardDiagnosis {
            near_zero_expectation: true,
            ..base
        };
        assert_eq!(select_algorithm(&d), Algorithm::BestOfNBc);
        // terminal scalar, skew 4.1: entropic
        let d = RewardDiagnosis { skewness: 4.1, ..base };
        assert_eq!(select_algorithm(&d), Algorithm::Entropic);
        // terminal scalar, low skew: grpo
        assert_eq!(select_algorithm(&base), Algorithm::Grpo);
        // dense, regression risk: reinforce+kl
        let d = RewardDiagnosis {
            density: RewardKind::DensePerStep,
            regression_risk: true,
            ..base
        };
        assert_eq!(select_algorithm(&d), Algorithm::ReinforceKl);
        // dense, no risk: ppo
        let d = RewardDiagnosis {
            density: RewardKind::DensePerStep,
            ..base
        };
        assert_eq!(select_algorithm(&d), Algorithm::PpoGae);
    }

    proptest! {
        #[test]
        fn plateau_monotone_in_threshold(
            history in proptest::collection::vec(0.0f64..10.0, 3..20),
            d1 in 0.001f64..0.2,
            extra in 0.0f64..0.5,
        ) {
            let d2 = d1 + extra;
            for dir in [MetricDirection::HigherBetter, MetricDirection::LowerBetter] {
                if detect_plateau(&history, 3, d1, dir) {
                    prop_assert!(detect_plateau(&history, 3, d2, dir));
                }
            }
        }

        #[test]
        fn selector_total_over_diagnosis_space(
            density_idx in 0usize..3,
            zero_fraction in 0.0f64..1.0,
            skewness in -5.0f64..10.0,
            near_zero in proptest::bool::ANY,
            risk in proptest::bool::ANY,
        ) {
            let density = [
                RewardKind::DensePerStep,
                RewardKind::TerminalScalar,
                RewardKind::OrdinalOnly,
            ][density_idx];
            let d = RewardDiagnosis {
                density,
                zero_fraction,
                skewness,
                near_zero_expectation: near_zero,
                regression_risk: risk,
            };
            // Must produce exactly one tag without panicking.
            let _ = select_algorithm(&d);
        }
    }
}
