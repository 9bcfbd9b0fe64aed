//! Denoising-parameter surrogate: a smooth quality surface over a
//! 10 x 10 x 8 hyperparameter grid with a flat-topped optimum, plus a
//! clip toggle worth a flat bonus that the scaffold's reranking proxy
//! cannot see, so only weight learning can capture it reliably.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::hash::hash_f64_bits;
use crate::rng;
use crate::scaffold::FeatureView;
use crate::types::{
    AnswerFormat, FailureTag, InstanceDescriptor, MetricDirection, RewardKind, TaskSpec,
};

use super::{normal, EnvKind, Environment, Instance};

const N_K: usize = 10;
const N_T: usize = 10;
const N_ALPHA: usize = 8;
const N_ACTIONS: usize = N_K * N_T * N_ALPHA * 2;
const D_FEATURES: usize = 10;
const N_TRAIN: usize = 400;
const N_EVAL: usize = 100;
/// Plateau value of the smooth part of the quality surface.
const QUALITY_PLATEAU: f64 = 0.55;
/// Flat bonus for enabling the clip stage.
const CLIP_BONUS: f64 = 0.15;
/// Normalised distance at which the flat top ends.
const PLATEAU_RADIUS_SQ: f64 = 2.0;

pub struct DenoiseSim {
    task_spec: TaskSpec,
    /// Centre of the quality plateau in (k, t, alpha) grid units.
    optimum: (f64, f64, f64),
    train: Vec<Instance>,
    eval: Vec<Instance>,
    hash: String,
}

fn decode(action: usize) -> (usize, usize, usize, bool) {
    let clip = action % 2 == 1;
    let rest = action / 2;
    let alpha = rest % N_ALPHA;
    let rest = rest / N_ALPHA;
    (rest / N_T, rest % N_T, alpha, clip)
}

impl DenoiseSim {
    pub fn new(seed: u64) -> Self {
        let mut surface_stream = rng::stream(&[seed, 1]);
        // Interior optimum so the plateau fits inside the grid.
        let optimum = (
            2.0 + 5.0 * surface_stream.gen::<f64>(),
            2.0 + 5.0 * surface_stream.gen::<f64>(),
            1.5 + 4.0 * surface_stream.gen::<f64>(),
        );

        let make_instance = |split: &str, idx: usize, stream: &mut rand_chacha::ChaCha8Rng| {
            let mut features: Vec<f64> = (0..D_FEATURES).map(|_| 0.5 * normal(stream)).collect();
            features[0] = 1.0;
            let factor = 0.85 + 0.15 * stream.gen::<f64>();
            // Noise statistics the scaffold's wider views expose.
            features[1] = factor;
            Instance {
                id: format!("{split}-{idx}"),
                features,
                format: AnswerFormat::Plain,
                true_label: 0,
                factor,
                slow: false,
            }
        };

        let mut train_stream = rng::stream(&[seed, 2]);
        let train: Vec<Instance> = (0..N_TRAIN)
            .map(|i| make_instance("train", i, &mut train_stream))
            .collect();

        let mut eval_stream = rng::stream(&[seed, 3]);
        let eval: Vec<Instance> = (0..N_EVAL)
            .map(|i| {
                let mut inst = make_instance("eval", i, &mut eval_stream);
                if i % 6 == 5 {
                    inst.format = AnswerFormat::Noisy;
                }
                inst.slow = i % 7 == 0;
                inst
            })
            .collect();

        let hash = hash_f64_bits(
            [optimum.0, optimum.1, optimum.2]
                .into_iter()
                .chain(train.iter().chain(eval.iter()).flat_map(|i| {
                    i.features.iter().cloned().chain([i.factor]).collect::<Vec<_>>()
                })),
        );

        let task_spec = TaskSpec {
            task_id: format!("denoise-{seed}"),
            description: "denoising parameter search on a smooth quality surface".into(),
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
            target_metric: 0.8,
        };

        DenoiseSim {
            task_spec,
            optimum,
            train,
            eval,
            hash,
        }
    }

    /// Smooth surface value in [0, QUALITY_PLATEAU]: flat on top,
    /// gaussian falloff outside the plateau.
    fn smooth_quality(&self, k: usize, t: usize, alpha: usize) -> f64 {
        let dk = (k as f64 - self.optimum.0) / 2.0;
        let dt = (t as f64 - self.optimum.1) / 2.0;
        let da = (alpha as f64 - self.optimum.2) / 1.6;
        let d_sq = dk * dk + dt * dt + da * da;
        let excess = (d_sq - PLATEAU_RADIUS_SQ).max(0.0);
        QUALITY_PLATEAU * (-excess / 4.0).exp()
    }
}

impl Environment for DenoiseSim {
    fn kind(&self) -> EnvKind {
        EnvKind::Denoise
    }

    fn task_spec(&self) -> &TaskSpec {
        &self.task_spec
    }

    fn feature_dim(&self) -> usize {
        D_FEATURES
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
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
        let (k, t, alpha, clip) = decode(action);
        let reward = instance.factor * self.smooth_quality(k, t, alpha)
            + if clip { CLIP_BONUS } else { 0.0 };
        let tag = if reward >= 0.2 {
            FailureTag::None
        } else {
            FailureTag::WrongAnswer
        };
        (reward, tag)
    }

    fn rerank_proxy(&self, instance: &Instance, action: usize) -> f64 {
        // Clip-blind by design: both clip variants of a setting tie, so
        // reranking can never systematically prefer the bonus.
        let (k, t, alpha, _) = decode(action);
        instance.factor * self.smooth_quality(k, t, alpha)
    }

    fn initial_base_weights(&self) -> Array2<f64> {
        Array2::zeros((D_FEATURES, N_ACTIONS))
    }

    fn describe_action(&self, action: usize) -> String {
        let (k, t, alpha, clip) = decode(action);
        format!("k:{k}/t:{t}/alpha:{alpha}/clip:{clip}")
    }

    fn cost_limit(&self) -> u32 {
        16
    }

    fn content_hash(&self) -> String {
        self.hash.clone()
    }

    fn brute_force_optimum(&self) -> Result<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..N_ACTIONS {
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
