//! The outer loop: evaluate, decide, improve, repeat. One sequential
//! writer appends every phase's events so a run is fully replayable.

use rand::Rng;

use crate::config;
use crate::controller::{diagnose, select_action, select_algorithm, ControllerState};
use crate::envs::{evaluate, make_environment, masked_state, EnvKind, Environment};
use crate::error::{Error, Result};
use crate::hash::hash_json;
use crate::policy::{Policy, RolloutGroup};
use crate::rl::{weight_update_step, Algorithm};
use crate::rng;
use crate::scaffold::{init_scaffold, propose_harness_update, Scaffold};
use crate::store::{
    replay, EventPayload, RunEvent, RunMode, RunReport, SCHEMA_VERSION,
};
use crate::types::{ActionKind, GenerationRecord, LoopConfig, Metrics, RewardKind};

pub use crate::store::RunMode as Mode;

/// Everything a finished run hands back: the report, the canonical
/// event log it was derived from, per-generation records, and the final
/// artefacts for checkpointing.
pub struct RunOutcome {
    pub report: RunReport,
    pub events: Vec<RunEvent>,
    pub records: Vec<GenerationRecord>,
    pub final_scaffold: Scaffold,
    pub final_policy: Policy<f64>,
}

struct EventSink {
    events: Vec<RunEvent>,
    config_hash: String,
    seed: u64,
}

impl EventSink {
    fn push(&mut self, payload: EventPayload) {
        self.events.push(RunEvent {
            schema_version: SCHEMA_VERSION,
            sequence_no: self.events.len() as u64,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            payload,
        });
    }
}

/// Rollout horizon for training: dense tasks expose per-step reward and
/// train on short multi-step episodes; terminal tasks are one-shot.
fn train_horizon(kind: RewardKind) -> usize {
    match kind {
        RewardKind::DensePerStep => 4,
        RewardKind::TerminalScalar | RewardKind::OrdinalOnly => 1,
    }
}

fn sample_groups(
    env: &dyn Environment,
    scaffold: &Scaffold,
    policy: &Policy<f64>,
    config: &LoopConfig,
    generation: u32,
    step: u32,
) -> Result<Vec<RolloutGroup<f64>>> {
    let train = env.train_instances();
    if train.is_empty() {
        return Err(Error::Run("environment has no training instances".into()));
    }
    let horizon = train_horizon(env.task_spec().reward_kind);
    let mut stream = rng::stream(&[
        config.seed,
        0x5747_5250,
        generation as u64,
        step as u64,
    ]);
    let mut groups = Vec::with_capacity(config.groups_per_step);
    for _ in 0..config.groups_per_step {
        let instance = &train[stream.gen_range(0..train.len())];
        let state = masked_state(env, scaffold, instance);
        let mut rollouts = Vec::with_capacity(config.rollout_group_size);
        for _ in 0..config.rollout_group_size {
            let mut entry = policy.sample_rollout(&state, horizon, &mut stream)?;
            entry.step_rewards = entry
                .actions
                .iter()
                .map(|&a| env.verify(instance, a).0)
                .collect();
            rollouts.push(entry);
        }
        groups.push(RolloutGroup { state, rollouts });
    }
    Ok(groups)
}

pub fn run_loop(config: &LoopConfig, env_kind: EnvKind, mode: RunMode) -> Result<RunOutcome> {
    config.validate()?;
    let env = make_environment(env_kind, config.seed);
    let task_spec = env.task_spec().clone();
    let direction = task_spec.metric_direction;

    let mut scaffold = init_scaffold(&task_spec)
        .map_err(|e| Error::Run(format!("scaffold initialisation for {env_kind}: {e}")))?;
    let mut policy = Policy::<f64>::new(
        env.initial_base_weights(),
        config.adapter_rank,
        1.0,
        rng::derive_seed(&[config.seed, 0x504f_4c49]),
    );

    let config_hash = hash_json(&(env_kind, mode, config));
    let mut sink = EventSink {
        events: Vec::new(),
        config_hash,
        seed: config.seed,
    };
    sink.push(EventPayload::RunStart {
        env_kind,
        mode,
        metric_direction: direction,
        env_hash: env.content_hash(),
        config: config.clone(),
    });

    let mut controller = ControllerState::new();
    let mut metrics_history: Vec<Metrics> = Vec::new();
    let mut decisions: Vec<(ActionKind, Option<Algorithm>, String)> = Vec::new();

    let max_generations = if mode == RunMode::Baseline {
        1
    } else {
        config.max_generations
    };

    for generation in 1..=max_generations {
        sink.push(EventPayload::GenerationStart { generation });
        let (trajectory, metrics) =
            evaluate(env.as_ref(), &scaffold, &policy, config.seed, generation)?;
        sink.push(EventPayload::EvaluationDone {
            metrics: metrics.clone(),
        });
        controller.push_metric(generation, metrics.primary_metric)?;
        metrics_history.push(metrics.clone());

        if mode == RunMode::Baseline {
            sink.push(EventPayload::GenerationEnd {
                generation,
                scaffold_hash: scaffold.content_hash(),
                policy_hash: policy.content_hash(),
                base_hash: policy.base_hash(),
                primary_metric: metrics.primary_metric,
            });
            break;
        }

        let action = match mode {
            RunMode::SiaH => ActionKind::HarnessUpdate,
            RunMode::SiaWh => select_action(&mut controller, config, direction),
            RunMode::Baseline => unreachable!(),
        };
        let diagnosis = diagnose(&metrics_history, &task_spec)?;
        let algorithm = (action == ActionKind::WeightUpdate)
            .then(|| select_algorithm(&diagnosis));
        sink.push(EventPayload::Decision {
            generation,
            action,
            diagnosis,
            algorithm,
        });

        match action {
            ActionKind::HarnessUpdate => {
                let (next, report) =
                    propose_harness_update(&scaffold, &trajectory, &metrics, &task_spec)?;
                scaffold = next;
                decisions.push((action, None, report.analysis.clone()));
                sink.push(EventPayload::HarnessUpdated {
                    generation,
                    report,
                    scaffold_hash: scaffold.content_hash(),
                });
            }
            ActionKind::WeightUpdate => {
                let algorithm = algorithm.expect("weight action selects an algorithm");
                let mut last_loss = 0.0;
                for step in 0..config.weight_steps_per_generation {
                    // Rollouts and gradients run at the exploration
                    // temperature; the deployed policy stays sharp.
                    let mut train_policy = policy.clone();
                    train_policy.temperature = config.train_temperature;
                    let groups = sample_groups(
                        env.as_ref(),
                        &scaffold,
                        &train_policy,
                        config,
                        generation,
                        step,
                    )?;
                    let (mut next, report) =
                        weight_update_step(algorithm, &groups, &train_policy, &config.algorithm)?;
                    next.temperature = policy.temperature;
                    policy = next;
                    last_loss = report.loss;
                    sink.push(EventPayload::WeightUpdateStep {
                        generation,
                        step,
                        report,
                    });
                }
                decisions.push((
                    action,
                    Some(algorithm),
                    format!("{algorithm}: final step loss {last_loss:.6}"),
                ));
                // Bookkeeping only; the knob hash is untouched.
                scaffold.generation += 1;
            }
        }

        sink.push(EventPayload::GenerationEnd {
            generation,
            scaffold_hash: scaffold.content_hash(),
            policy_hash: policy.content_hash(),
            base_hash: policy.base_hash(),
            primary_metric: metrics.primary_metric,
        });
    }

    let final_metric = metrics_history
        .last()
        .map(|m| m.primary_metric)
        .unwrap_or(0.0);
    sink.push(EventPayload::RunEnd {
        generations: metrics_history.len() as u32,
        final_metric,
    });

    let records = build_records(&metrics_history, &decisions);
    let report = replay(&sink.events)?;
    Ok(RunOutcome {
        report,
        events: sink.events,
        records,
        final_scaffold: scaffold,
        final_policy: policy,
    })
}

/// Pair each actioned generation with the next generation's evaluation.
fn build_records(
    metrics_history: &[Metrics],
    decisions: &[(ActionKind, Option<Algorithm>, String)],
) -> Vec<GenerationRecord> {
    decisions
        .iter()
        .enumerate()
        .filter_map(|(i, (action, algorithm, analysis))| {
            let after = metrics_history.get(i + 1)?;
            Some(GenerationRecord {
                generation: metrics_history[i].generation,
                action: *action,
                algorithm: *algorithm,
                metrics_before: metrics_history[i].clone(),
                metrics_after: after.clone(),
                report: analysis.clone(),
            })
        })
        .collect()
}

/// Convenience entry point used by the CLI: parse the config text (if
/// any), apply overrides, and run.
pub fn run_from_parts(
    config_text: Option<&str>,
    seed: Option<u64>,
    generations: Option<u32>,
    env_kind: EnvKind,
    mode: RunMode,
) -> Result<RunOutcome> {
    let mut cfg = match config_text {
        Some(text) => config::parse_config(text)?,
        None => LoopConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(g) = generations {
        cfg.max_generations = g;
    }
    cfg.validate()?;
    run_loop(&cfg, env_kind, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::events_to_string;

    fn small_config(seed: u64) -> LoopConfig {
        LoopConfig {
            max_generations: 6,
            weight_steps_per_generation: 5,
            seed,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn baseline_is_one_evaluation() {
        let outcome = run_loop(&small_config(1), EnvKind::Kernel, RunMode::Baseline).unwrap();
        let evals = outcome
            .events
            .iter()
            .filter(|e| matches!(e.payload, EventPayload::EvaluationDone { .. }))
            .count();
        assert_eq!(evals, 1);
        assert_eq!(outcome.report.rows.len(), 1);
        assert_eq!(outcome.report.initial, outcome.report.sia_wh_best);
        assert!(outcome.records.is_empty());
    }

    #[test]
    fn sia_h_never_touches_weights() {
        let outcome = run_loop(&small_config(2), EnvKind::Kernel, RunMode::SiaH).unwrap();
        assert!(!outcome
            .events
            .iter()
            .any(|e| matches!(e.payload, EventPayload::WeightUpdateStep { .. })));
        let policy_hashes: Vec<&String> = outcome
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::GenerationEnd { policy_hash, .. } => Some(policy_hash),
                _ => None,
            })
            .collect();
        assert!(policy_hashes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn identical_configs_identical_logs() {
        let a = run_loop(&small_config(3), EnvKind::Denoise, RunMode::SiaWh).unwrap();
        let b = run_loop(&small_config(3), EnvKind::Denoise, RunMode::SiaWh).unwrap();
        assert_eq!(
            events_to_string(&a.events).unwrap(),
            events_to_string(&b.events).unwrap()
        );
        let c = run_loop(&small_config(4), EnvKind::Denoise, RunMode::SiaWh).unwrap();
        assert_ne!(
            events_to_string(&a.events).unwrap(),
            events_to_string(&c.events).unwrap()
        );
    }

    #[test]
    fn phase_ordering_within_generations() {
        let outcome = run_loop(&small_config(5), EnvKind::Classify, RunMode::SiaWh).unwrap();
        // Within each generation: evaluation_done, then decision, then
        // updates, then generation_end.
        let mut stage = 0u8;
        for event in &outcome.events {
            match &event.payload {
                EventPayload::GenerationStart { .. } => stage = 0,
                EventPayload::EvaluationDone { .. } => {
                    assert_eq!(stage, 0);
                    stage = 1;
                }
                EventPayload::Decision { .. } => {
                    assert_eq!(stage, 1);
                    stage = 2;
                }
                EventPayload::HarnessUpdated { .. } | EventPayload::WeightUpdateStep { .. } => {
                    assert!(stage >= 2);
                    stage = 3;
                }
                EventPayload::GenerationEnd { .. } => {
                    assert!(stage >= 1);
                    stage = 4;
                }
                _ => {}
            }
        }
    }

    #[test]
    fn lever_exclusivity_by_hashes() {
        let outcome = run_loop(&small_config(6), EnvKind::Kernel, RunMode::SiaWh).unwrap();
        let ends: Vec<(&String, &String, &String)> = outcome
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::GenerationEnd {
                    scaffold_hash,
                    policy_hash,
                    base_hash,
                    ..
                } => Some((scaffold_hash, policy_hash, base_hash)),
                _ => None,
            })
            .collect();
        for w in ends.windows(2) {
            let scaffold_changed = w[0].0 != w[1].0;
            let policy_changed = w[0].1 != w[1].1;
            assert!(
                !(scaffold_changed && policy_changed),
                "both levers moved in one generation"
            );
            assert_eq!(w[0].2, w[1].2, "base weights must stay frozen");
        }
    }

    #[test]
    fn replay_matches_inline_report() {
        let outcome = run_loop(&small_config(7), EnvKind::Denoise, RunMode::SiaH).unwrap();
        let text = events_to_string(&outcome.events).unwrap();
        let parsed = crate::store::parse_events(&text).unwrap();
        let replayed = replay(&parsed).unwrap();
        assert_eq!(
            serde_json::to_string(&replayed).unwrap(),
            serde_json::to_string(&outcome.report).unwrap()
        );
    }

    #[test]
    fn records_pair_consecutive_evaluations() {
        let outcome = run_loop(&small_config(8), EnvKind::Kernel, RunMode::SiaH).unwrap();
        for record in &outcome.records {
            record.validate().unwrap();
        }
        assert_eq!(outcome.records.len(), 5);
    }
}
