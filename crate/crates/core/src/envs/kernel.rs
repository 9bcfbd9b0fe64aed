//! Kernel-tuning surrogate: a 128-point configuration grid where most
//! configurations fail validity checks outright and the rest map to a
//! multiplicative runtime surface with a single hidden optimum.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hash::hash_f64_bits;
use crate::metric::score_from_runtime;
use crate::rng;
use crate::scaffold::FeatureView;
use crate::types::{
    AnswerFormat, FailureTag, InstanceDescriptor, MetricDirection, RewardKind, TaskSpec,
};

use super::{normal, EnvKind, Environment, Instance};

const N_TILE: usize = 8;
const N_UNROLL: usize = 4;
const N_VECTOR: usize = 4;
const N_CONFIGS: usize = N_TILE * N_UNROLL * N_VECTOR;
const N_VALID: usize = 48;
const D_FEATURES: usize = 12;
const N_TRAIN: usize = 400;
const N_EVAL: usize = 100;
const BASE_RUNTIME: f64 = 1000.0;
const MAX_PENALTY: f64 = 1.6;

pub struct KernelSim {
    task_spec: TaskSpec,
    /// Per-level log-runtime penalties; the zero entry in each axis
    /// marks the optimal setting.
    tile_penalty: [f64; N_TILE],
    unroll_penalty: [f64; N_UNROLL],
    vector_penalty: [f64; N_VECTOR],
    valid: [bool; N_CONFIGS],
    /// Known-best configuration, kept as a cross-check oracle.
    #[allow(dead_code)]
    optimum: usize,
    /// Noisy validity predictor backing the scaffold's reranker. It
    /// knows little about runtime, only (mostly) what compiles.
    proxy_scores: [f64; N_CONFIGS],
    train: Vec<Instance>,
    eval: Vec<Instance>,
    hash: String,
}

fn decode(config: usize) -> (usize, usize, usize) {
    let tile = config % N_TILE;
    let unroll = (config / N_TILE) % N_UNROLL;
    let vector = config / (N_TILE * N_UNROLL);
    (tile, unroll, vector)
}

fn encode(tile: usize, unroll: usize, vector: usize) -> usize {
    tile + N_TILE * (unroll + N_UNROLL * vector)
}

impl KernelSim {
    pub fn new(seed: u64) -> Self {
        let mut surface_stream = rng::stream(&[seed, 1]);
        let mut tile_penalty = [0.0; N_TILE];
        let mut unroll_penalty = [0.0; N_UNROLL];
        let mut vector_penalty = [0.0; N_VECTOR];
        for p in tile_penalty.iter_mut() {
            *p = surface_stream.gen::<f64>() * MAX_PENALTY;
        }
        for p in unroll_penalty.iter_mut() {
            *p = surface_stream.gen::<f64>() * MAX_PENALTY;
        }
        for p in vector_penalty.iter_mut() {
            *p = surface_stream.gen::<f64>() * MAX_PENALTY;
        }
        let best_tile = surface_stream.gen_range(0..N_TILE);
        let best_unroll = surface_stream.gen_range(0..N_UNROLL);
        let best_vector = surface_stream.gen_range(0..N_VECTOR);
        tile_penalty[best_tile] = 0.0;
        unroll_penalty[best_unroll] = 0.0;
        vector_penalty[best_vector] = 0.0;
        let optimum = encode(best_tile, best_unroll, best_vector);

        // Validity predicate: a seeded subset compiles; the optimum is
        // always in it so exhaustive search has a well-defined target.
        let mut validity_stream = rng::stream(&[seed, 2]);
        let mut indices: Vec<usize> = (0..N_CONFIGS).collect();
        indices.shuffle(&mut validity_stream);
        let mut valid = [false; N_CONFIGS];
        valid[optimum] = true;
        let mut marked = 1;
        for &i in &indices {
            if marked == N_VALID {
                break;
            }
            if !valid[i] {
                valid[i] = true;
                marked += 1;
            }
        }

        // The proxy mispredicts validity on a random tenth of the grid.
        let mut proxy_stream = rng::stream(&[seed, 3]);
        let mut proxy_scores = [0.0; N_CONFIGS];
        for (i, score) in proxy_scores.iter_mut().enumerate() {
            let flipped = proxy_stream.gen::<f64>() < 0.1;
            let predicted_valid = valid[i] != flipped;
            let jitter = 0.01 * proxy_stream.gen::<f64>();
            *score = if predicted_valid { 1.0 + jitter } else { jitter };
        }

        let make_instance = |split: &str, idx: usize, stream: &mut rand_chacha::ChaCha8Rng| {
            let mut features: Vec<f64> = (0..D_FEATURES).map(|_| 0.5 * normal(stream)).collect();
            // Constant bias channel so a linear policy can express
            // instance-independent configuration preferences.
            features[0] = 1.0;
            let factor = 1.0 + 0.15 * stream.gen::<f64>();
            Instance {
                id: format!("{split}-{idx}"),
                features,
                format: AnswerFormat::Plain,
                true_label: 0,
                factor,
                slow: false,
            }
        };

        let mut train_stream = rng::stream(&[seed, 4]);
        let train: Vec<Instance> = (0..N_TRAIN)
            .map(|i| make_instance("train", i, &mut train_stream))
            .collect();

        let mut eval_stream = rng::stream(&[seed, 5]);
        let eval: Vec<Instance> = (0..N_EVAL)
            .map(|i| {
                let mut inst = make_instance("eval", i, &mut eval_stream);
                if i % 5 == 4 {
                    inst.format = AnswerFormat::Noisy;
                }
                inst.slow = i % 11 == 0;
                inst
            })
            .collect();

        let hash = hash_f64_bits(
            tile_penalty
                .iter()
                .chain(unroll_penalty.iter())
                .chain(vector_penalty.iter())
                .chain(proxy_scores.iter())
                .cloned()
                .chain(valid.iter().map(|v| *v as u64 as f64))
                .chain([optimum as f64])
                .chain(train.iter().flat_map(|i| {
                    i.features.iter().cloned().chain([i.factor]).collect::<Vec<_>>()
                }))
                .chain(eval.iter().flat_map(|i| {
                    i.features.iter().cloned().chain([i.factor]).collect::<Vec<_>>()
                })),
        );

        let task_spec = TaskSpec {
            task_id: format!("kernel-{seed}"),
            description: "compiled-kernel configuration search with sparse validity".into(),
            sample_instances: train
                .iter()
                .map(|i| InstanceDescriptor {
                    id: i.id.clone(),
                    format: i.format,
                })
                .collect(),
            reference_artifacts: None,
            reward_kind: RewardKind::TerminalScalar,
            metric_direction: MetricDirection::HigherBetter,
            target_metric: 1.5,
        };

        KernelSim {
            task_spec,
            tile_penalty,
            unroll_penalty,
            vector_penalty,
            valid,
            proxy_scores,
            optimum,
            train,
            eval,
            hash,
        }
    }

    fn runtime(&self, config: usize, factor: f64) -> f64 {
        let (t, u, v) = decode(config);
        BASE_RUNTIME
            * (self.tile_penalty[t] + self.unroll_penalty[u] + self.vector_penalty[v]).exp()
            * factor
    }
}

impl Environment for KernelSim {
    fn kind(&self) -> EnvKind {
        EnvKind::Kernel
    }

    fn task_spec(&self) -> &TaskSpec {
        &self.task_spec
    }

    fn feature_dim(&self) -> usize {
        D_FEATURES
    }

    fn n_actions(&self) -> usize {
        N_CONFIGS
    }

    fn eval_instances(&self) -> &[Instance] {
        &self.eval
    }

    fn train_instances(&self) -> &[Instance] {
        &self.train
    }

    fn view_mask(&self, view: FeatureView) -> Vec<bool> {
        let visible = match view {
            FeatureView::Minimal => 4,
            FeatureView::Standard => 8,
            FeatureView::Full => D_FEATURES,
        };
        (0..D_FEATURES).map(|i| i < visible).collect()
    }

    fn verify(&self, instance: &Instance, action: usize) -> (f64, FailureTag) {
        if !self.valid[action] {
            return (0.0, FailureTag::ToolError);
        }
        let score = score_from_runtime(self.runtime(action, instance.factor))
            .expect("runtime is positive by construction");
        (score, FailureTag::None)
    }

    fn rerank_proxy(&self, _instance: &Instance, action: usize) -> f64 {
        self.proxy_scores[action]
    }

    fn initial_base_weights(&self) -> Array2<f64> {
        Array2::zeros((D_FEATURES, N_CONFIGS))
    }

    fn describe_action(&self, action: usize) -> String {
        let (t, u, v) = decode(action);
        format!("tile:{t}/unroll:{u}/vector:{v}")
    }

    fn cost_limit(&self) -> u32 {
        16
    }

    fn content_hash(&self) -> String {
        self.hash.clone()
    }

    fn brute_force_optimum(&self) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..N_CONFIGS {
            let mean = self
                .eval
                .iter()
                .map(|inst| self.verify(inst, a).0)
                .sum::<f64>()
                / self.eval.len() as f64;
            if best.map_or(true, |(_, b)| mean > b) {
                best = Some((a, mean));
            }
        }
        best.ok_or_else(|| Error::Domain("empty evaluation set".into()))
    }
}
