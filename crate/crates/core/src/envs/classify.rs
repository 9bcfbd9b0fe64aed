//! Fine-grained classification surrogate: many classes, confusable
//! prototype pairs, dense graded rewards, held-out evaluation split.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::Result;
use crate::hash::hash_f64_bits;
use crate::rng;
use crate::scaffold::FeatureView;
use crate::types::{
    AnswerFormat, FailureTag, InstanceDescriptor, MetricDirection, RewardKind, TaskSpec,
};

use super::{normal, EnvKind, Environment, Instance};

const N_CLASSES: usize = 191;
const D_FEATURES: usize = 16;
const N_TRAIN: usize = 500;
const N_EVAL: usize = 100;
const CONFUSABLE_REWARD: f64 = 0.3;
/// Feature dimensions carrying prototype signal; feature 0 is a
/// constant bias input.
const PROTO_DIM: usize = D_FEATURES - 1;
/// Logit scale of the clean prototype weights; sharp enough that
/// sampling tracks the argmax once the corruption is cancelled.
const BASE_SHARPNESS: f64 = 24.0;
/// Standard deviation of the per-class bias-row corruption.
const CORRUPTION_SCALE: f64 = 8.0;

pub struct ClassifySim {
    task_spec: TaskSpec,
    /// Corrupted prototype similarity used by the scaffold's reranker;
    /// full-rank noise, so its accuracy is capped for everyone.
    proxy_weights: Array2<f64>,
    /// Base policy weights: prototypes plus a low-rank systematic bias
    /// that an adapter of modest rank can cancel.
    base_weights: Array2<f64>,
    train: Vec<Instance>,
    eval: Vec<Instance>,
    hash: String,
}

fn normalize_column(col: &mut [f64]) {
    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    for v in col {
        *v /= norm;
    }
}

impl ClassifySim {
    pub fn new(seed: u64) -> Self {
        let mut proto_stream = rng::stream(&[seed, 1]);
        let mut prototypes = Array2::zeros((PROTO_DIM, N_CLASSES));
        for c in 0..N_CLASSES {
            let mut col: Vec<f64> = if c % 2 == 1 {
                // Odd classes sit close to their even partner: the
                // adjacent-category structure.
                (0..PROTO_DIM)
                    .map(|i| prototypes[(i, c - 1)] + 0.3 * normal(&mut proto_stream))
                    .collect()
            } else {
                (0..PROTO_DIM).map(|_| normal(&mut proto_stream)).collect()
            };
            normalize_column(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                prototypes[(i, c)] = v;
            }
        }

        // Base weights: sharp clean prototype weights, but the bias row
        // (driven by the constant feature) carries a per-class offset
        // that systematically misranks classes. The offsets form a
        // rank-1 weight-space error, so a low-rank adapter can cancel
        // them outright; that is the weight lever's headroom.
        let mut bias_stream = rng::stream(&[seed, 2]);
        let beta = BASE_SHARPNESS;
        let mut base_weights = Array2::zeros((D_FEATURES, N_CLASSES));
        for c in 0..N_CLASSES {
            base_weights[(0, c)] = -CORRUPTION_SCALE * normal(&mut bias_stream);
            for i in 0..PROTO_DIM {
                base_weights[(i + 1, c)] = beta * prototypes[(i, c)];
            }
        }

        let mut proxy_stream = rng::stream(&[seed, 3]);
        let mut proxy_weights = Array2::zeros((D_FEATURES, N_CLASSES));
        for c in 0..N_CLASSES {
            let mut col: Vec<f64> = (0..PROTO_DIM)
                .map(|i| prototypes[(i, c)] + 0.9 * normal(&mut proxy_stream) / (PROTO_DIM as f64).sqrt())
                .collect();
            normalize_column(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                proxy_weights[(i + 1, c)] = v;
            }
        }

        let make_instance = |split: &str,
                             idx: usize,
                             stream: &mut rand_chacha::ChaCha8Rng,
                             format: AnswerFormat,
                             slow: bool| {
            let label = stream.gen_range(0..N_CLASSES);
            let mut features = Vec::with_capacity(D_FEATURES);
            features.push(1.0);
            for i in 0..PROTO_DIM {
                features
                    .push(prototypes[(i, label)] + 0.35 * normal(stream) / (PROTO_DIM as f64).sqrt());
            }
            Instance {
                id: format!("{split}-{idx}"),
                features,
                format,
                true_label: label,
                factor: 1.0,
                slow,
            }
        };

        // Training/regularisation set: curated, plain-format only.
        let mut train_stream = rng::stream(&[seed, 4]);
        let train: Vec<Instance> = (0..N_TRAIN)
            .map(|i| make_instance("train", i, &mut train_stream, AnswerFormat::Plain, false))
            .collect();

        // Held-out evaluation split: mixed output formats, some slow.
        let mut eval_stream = rng::stream(&[seed, 5]);
        let eval: Vec<Instance> = (0..N_EVAL)
            .map(|i| {
                let format = match i % 10 {
                    0..=4 => AnswerFormat::Plain,
                    5..=7 => AnswerFormat::Noisy,
                    _ => AnswerFormat::Structured,
                };
                make_instance("eval", i, &mut eval_stream, format, i % 7 == 0)
            })
            .collect();

        let hash = hash_f64_bits(
            prototypes
                .iter()
                .chain(base_weights.iter())
                .chain(proxy_weights.iter())
                .chain(train.iter().flat_map(|i| i.features.iter()))
                .chain(eval.iter().flat_map(|i| i.features.iter()))
                .cloned(),
        );

        let task_spec = TaskSpec {
            task_id: format!("classify-{seed}"),
            description: "fine-grained classification over confusable categories".into(),
            sample_instances: train
                .iter()
                .map(|i| InstanceDescriptor {
                    id: i.id.clone(),
                    format: i.format,
                })
                .collect(),
            reference_artifacts: None,
            reward_kind: RewardKind::DensePerStep,
            metric_direction: MetricDirection::HigherBetter,
            target_metric: 0.95,
        };

        ClassifySim {
            task_spec,
            proxy_weights,
            base_weights,
            train,
            eval,
            hash,
        }
    }

    fn confusable_partner(&self, class: usize) -> Option<usize> {
        if class % 2 == 0 {
            (class + 1 < N_CLASSES).then_some(class + 1)
        } else {
            Some(class - 1)
        }
    }
}

impl Environment for ClassifySim {
    fn kind(&self) -> EnvKind {
        EnvKind::Classify
    }

    fn task_spec(&self) -> &TaskSpec {
        &self.task_spec
    }

    fn feature_dim(&self) -> usize {
        D_FEATURES
    }

    fn n_actions(&self) -> usize {
        N_CLASSES
    }

    fn eval_instances(&self) -> &[Instance] {
        &self.eval
    }

    fn train_instances(&self) -> &[Instance] {
        &self.train
    }

    fn view_mask(&self, view: FeatureView) -> Vec<bool> {
        let visible = match view {
            FeatureView::Minimal => 6,
            FeatureView::Standard => 11,
            FeatureView::Full => D_FEATURES,
        };
        (0..D_FEATURES).map(|i| i < visible).collect()
    }

    fn verify(&self, instance: &Instance, action: usize) -> (f64, FailureTag) {
        if action == instance.true_label {
            (1.0, FailureTag::None)
        } else if self.confusable_partner(instance.true_label) == Some(action) {
            (CONFUSABLE_REWARD, FailureTag::WrongAnswer)
        } else {
            (0.0, FailureTag::WrongAnswer)
        }
    }

    fn rerank_proxy(&self, instance: &Instance, action: usize) -> f64 {
        let state = Array1::from_vec(instance.features.clone());
        self.proxy_weights.column(action).dot(&state)
    }

    fn initial_base_weights(&self) -> Array2<f64> {
        self.base_weights.clone()
    }

    fn describe_action(&self, action: usize) -> String {
        format!("class:{action}")
    }

    fn cost_limit(&self) -> u32 {
        16
    }

    fn content_hash(&self) -> String {
        self.hash.clone()
    }

    fn brute_force_optimum(&self) -> Result<(usize, f64)> {
        // Oracle labels score 1.0 on every instance by definition; the
        // "action" slot is meaningless for a per-instance label task.
        Ok((0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn split_hygiene() {
        let env = ClassifySim::new(3);
        let train_ids: BTreeSet<&str> = env.train.iter().map(|i| i.id.as_str()).collect();
        for inst in &env.eval {
            assert!(!train_ids.contains(inst.id.as_str()));
        }
        assert_eq!(env.train.len(), N_TRAIN);
        assert_eq!(env.eval.len(), N_EVAL);
    }

    #[test]
    fn every_instance_has_one_true_label() {
        let env = ClassifySim::new(5);
        for inst in env.train.iter().chain(&env.eval) {
            assert!(inst.true_label < N_CLASSES);
            assert_eq!(env.verify(inst, inst.true_label), (1.0, FailureTag::None));
        }
    }

    #[test]
    fn confusable_partner_scores_partial_credit() {
        let env = ClassifySim::new(7);
        let inst = env
            .eval
            .iter()
            .find(|i| env.confusable_partner(i.true_label).is_some())
            .unwrap();
        let partner = env.confusable_partner(inst.true_label).unwrap();
        let (r, tag) = env.verify(inst, partner);
        assert_eq!(r, CONFUSABLE_REWARD);
        assert_eq!(tag, FailureTag::WrongAnswer);
    }

    #[test]
    fn train_set_is_plain_format() {
        let env = ClassifySim::new(9);
        assert!(env.train.iter().all(|i| i.format == AnswerFormat::Plain));
        assert!(env.eval.iter().any(|i| i.format == AnswerFormat::Structured));
    }

    #[test]
    fn base_policy_beats_chance_on_full_view() {
        let env = ClassifySim::new(11);
        let w = env.initial_base_weights();
        let mut correct = 0;
        for inst in &env.eval {
            let s = Array1::from_vec(inst.features.clone());
            let logits = w.t().dot(&s);
            let argmax = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if argmax == inst.true_label {
                correct += 1;
            }
        }
        let acc = correct as f64 / env.eval.len() as f64;
        assert!(acc > 0.10, "base argmax accuracy {acc}");
        assert!(acc < 0.95, "base argmax accuracy suspiciously high {acc}");
    }

    #[test]
    fn oracle_metric_is_one() {
        let env = ClassifySim::new(13);
        assert_eq!(env.brute_force_optimum().unwrap().1, 1.0);
    }
}
