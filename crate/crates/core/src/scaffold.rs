//! Scaffold initialisation and the rule-driven harness-update lever.
//!
//! The scaffold is a typed knob map; a harness update is a single knob
//! edit chosen by an ordered repair-rule table from the dominant failure
//! tag of the last trajectory. Weights are never touched here.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::hash_json;
use crate::types::{AnswerFormat, FailureTag, RewardKind, TaskSpec};

pub const RETRY_BUDGET_MAX: u32 = 5;
pub const SAMPLES_MAX: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserStrictness {
    Strict,
    Lenient,
    StructuredBlock,
}

impl ParserStrictness {
    pub fn accepts(&self, format: AnswerFormat) -> bool {
        match self {
            ParserStrictness::Strict => format == AnswerFormat::Plain,
            ParserStrictness::Lenient => {
                matches!(format, AnswerFormat::Plain | AnswerFormat::Noisy)
            }
            ParserStrictness::StructuredBlock => true,
        }
    }

    fn loosen(&self) -> Option<ParserStrictness> {
        match self {
            ParserStrictness::Strict => Some(ParserStrictness::Lenient),
            ParserStrictness::Lenient => Some(ParserStrictness::StructuredBlock),
            ParserStrictness::StructuredBlock => None,
        }
    }
}

/// Observation subsets every environment declares, narrowest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureView {
    Minimal,
    Standard,
    Full,
}

impl FeatureView {
    fn widen(&self) -> Option<FeatureView> {
        match self {
            FeatureView::Minimal => Some(FeatureView::Standard),
            FeatureView::Standard => Some(FeatureView::Full),
            FeatureView::Full => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaffoldKnobs {
    pub parser_strictness: ParserStrictness,
    pub retry_budget: u32,
    pub feature_view: FeatureView,
    pub reranker_enabled: bool,
    pub samples_per_instance: u32,
    pub temperature_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaffold {
    pub generation: u32,
    pub knobs: ScaffoldKnobs,
    pub provenance: Vec<String>,
}

impl Scaffold {
    /// Hash of the knob settings only. Generation and provenance are
    /// bookkeeping; the scaffold's behavioural identity is its knobs,
    /// which is what lever-exclusivity checks compare.
    pub fn content_hash(&self) -> String {
        hash_json(&self.knobs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knobs.retry_budget > RETRY_BUDGET_MAX {
            return Err(Error::Config("retry_budget out of range".into()));
        }
        if self.knobs.samples_per_instance < 1 || self.knobs.samples_per_instance > SAMPLES_MAX {
            return Err(Error::Config("samples_per_instance out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTrace {
    pub instance_id: String,
    pub state: Vec<f64>,
    pub actions: Vec<usize>,
    pub tool_events: Vec<String>,
    pub extracted_answer: Option<String>,
    pub reward: f64,
    pub failure_tag: FailureTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub generation: u32,
    pub traces: Vec<InstanceTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnobDiff {
    pub knob: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub analysis: String,
    pub applied_rules: Vec<String>,
    pub knob_diff: Vec<KnobDiff>,
}

/// Generation-1 scaffold from per-reward-kind defaults, with the parser
/// filtered for admissibility against every sample instance: a parser
/// mode is admissible only if it parses all of them.
pub fn init_scaffold(task_spec: &TaskSpec) -> Result<Scaffold> {
    task_spec.validate()?;
    let parser = [
        ParserStrictness::Strict,
        ParserStrictness::Lenient,
        ParserStrictness::StructuredBlock,
    ]
    .into_iter()
    .find(|p| task_spec.sample_instances.iter().all(|i| p.accepts(i.format)))
    .ok_or_else(|| {
        Error::ScaffoldInit(format!(
            "no parser mode accepts every sample instance of task {}",
            task_spec.task_id
        ))
    })?;
    let retry_budget = match task_spec.reward_kind {
        RewardKind::DensePerStep => 1,
        RewardKind::TerminalScalar => 2,
        RewardKind::OrdinalOnly => 1,
    };
    Ok(Scaffold {
        generation: 1,
        knobs: ScaffoldKnobs {
            parser_strictness: parser,
            retry_budget,
            feature_view: FeatureView::Minimal,
            reranker_enabled: false,
            samples_per_instance: 1,
            temperature_override: None,
        },
        provenance: vec!["init".to_string()],
    })
}

/// Exact per-tag counts; every tag is present, zero when unseen.
pub fn classify_failures(trajectory: &Trajectory) -> BTreeMap<FailureTag, u64> {
    let mut counts: BTreeMap<FailureTag, u64> =
        FailureTag::ALL.iter().map(|t| (*t, 0)).collect();
    for trace in &trajectory.traces {
        *counts.get_mut(&trace.failure_tag).unwrap() += 1;
    }
    counts
}

/// Most frequent non-`None` tag; ties broken by declared tag order.
fn dominant_failure(counts: &BTreeMap<FailureTag, u64>) -> Option<FailureTag> {
    let mut best: Option<(FailureTag, u64)> = None;
    for tag in FailureTag::ALL {
        if tag == FailureTag::None {
            continue;
        }
        let c = counts[&tag];
        if c > 0 && best.map_or(true, |(_, bc)| c > bc) {
            best = Some((tag, c));
        }
    }
    best.map(|(t, _)| t)
}

enum Edit {
    Parser(ParserStrictness),
    Retry(u32),
    View(FeatureView),
    Reranker(bool),
    Samples(u32),
}

fn apply_edit(knobs: &mut ScaffoldKnobs, edit: &Edit) -> KnobDiff {
    match edit {
        Edit::Parser(p) => {
            let before = format!("{:?}", knobs.parser_strictness);
            knobs.parser_strictness = *p;
            KnobDiff {
                knob: "parser_strictness".into(),
                before,
                after: format!("{p:?}"),
            }
        }
        Edit::Retry(r) => {
            let before = knobs.retry_budget.to_string();
            knobs.retry_budget = *r;
            KnobDiff {
                knob: "retry_budget".into(),
                before,
                after: r.to_string(),
            }
        }
        Edit::View(v) => {
            let before = format!("{:?}", knobs.feature_view);
            knobs.feature_view = *v;
            KnobDiff {
                knob: "feature_view".into(),
                before,
                after: format!("{v:?}"),
            }
        }
        Edit::Reranker(b) => {
            let before = knobs.reranker_enabled.to_string();
            knobs.reranker_enabled = *b;
            KnobDiff {
                knob: "reranker_enabled".into(),
                before,
                after: b.to_string(),
            }
        }
        Edit::Samples(s) => {
            let before = knobs.samples_per_instance.to_string();
            knobs.samples_per_instance = *s;
            KnobDiff {
                knob: "samples_per_instance".into(),
                before,
                after: s.to_string(),
            }
        }
    }
}

/// Repair rule for a dominant failure tag, when the targeted knob can
/// still move. Returns (rule id, edit).
fn repair_rule(tag: FailureTag, knobs: &ScaffoldKnobs) -> Option<(String, Edit)> {
    match tag {
        FailureTag::ParseFailure => knobs
            .parser_strictness
            .loosen()
            .map(|p| ("parse_loosen".to_string(), Edit::Parser(p))),
        FailureTag::ToolError => (knobs.retry_budget < RETRY_BUDGET_MAX)
            .then(|| ("retry_increment".to_string(), Edit::Retry(knobs.retry_budget + 1))),
        FailureTag::WrongAnswer => {
            if !knobs.reranker_enabled {
                Some(("reranker_enable".to_string(), Edit::Reranker(true)))
            } else if let Some(v) = knobs.feature_view.widen() {
                Some(("feature_widen".to_string(), Edit::View(v)))
            } else if knobs.samples_per_instance < SAMPLES_MAX {
                Some((
                    "samples_increment".to_string(),
                    Edit::Samples(knobs.samples_per_instance + 1),
                ))
            } else {
                None
            }
        }
        FailureTag::Timeout => (knobs.samples_per_instance > 1).then(|| {
            (
                "samples_decrement".to_string(),
                Edit::Samples(knobs.samples_per_instance - 1),
            )
        }),
        FailureTag::InvalidConfig => (knobs.feature_view != FeatureView::Minimal)
            .then(|| ("view_reset".to_string(), Edit::View(FeatureView::Minimal))),
        FailureTag::None => None,
    }
}

/// Fixed round-robin hill-climb when no failure dominates (or the
/// dominant tag's knob is pinned at a bound).
fn hill_climb(generation: u32, knobs: &ScaffoldKnobs) -> Option<(String, Edit)> {
    let candidates: [fn(&ScaffoldKnobs) -> Option<(String, Edit)>; 5] = [
        |k| {
            (k.retry_budget < RETRY_BUDGET_MAX)
                .then(|| ("hill_retry".to_string(), Edit::Retry(k.retry_budget + 1)))
        },
        |k| {
            (k.samples_per_instance < SAMPLES_MAX).then(|| {
                (
                    "hill_samples".to_string(),
                    Edit::Samples(k.samples_per_instance + 1),
                )
            })
        },
        |k| (!k.reranker_enabled).then(|| ("hill_reranker".to_string(), Edit::Reranker(true))),
        |k| {
            k.feature_view
                .widen()
                .map(|v| ("hill_view".to_string(), Edit::View(v)))
        },
        |k| {
            k.parser_strictness
                .loosen()
                .map(|p| ("hill_parser".to_string(), Edit::Parser(p)))
        },
    ];
    for i in 0..candidates.len() {
        let idx = (generation as usize + i) % candidates.len();
        if let Some(hit) = candidates[idx](knobs) {
            return Some(hit);
        }
    }
    None
}

/// One harness update: exactly one knob changes (or none when every knob
/// is at a bound), generation increments, provenance records the rule.
pub fn propose_harness_update(
    scaffold: &Scaffold,
    trajectory: &Trajectory,
    _metrics: &crate::types::Metrics,
    _task_spec: &TaskSpec,
) -> Result<(Scaffold, ImprovementReport)> {
    if trajectory.generation != scaffold.generation {
        return Err(Error::Run(format!(
            "trajectory generation {} does not match scaffold generation {}",
            trajectory.generation, scaffold.generation
        )));
    }
    let counts = classify_failures(trajectory);
    let dominant = dominant_failure(&counts);
    let chosen = dominant
        .and_then(|tag| repair_rule(tag, &scaffold.knobs))
        .or_else(|| hill_climb(scaffold.generation, &scaffold.knobs));

    let mut knobs = scaffold.knobs.clone();
    let (rule_id, knob_diff) = match chosen {
        Some((rule, edit)) => {
            let diff = apply_edit(&mut knobs, &edit);
            (rule, vec![diff])
        }
        None => ("noop".to_string(), Vec::new()),
    };
    let analysis = match dominant {
        Some(tag) => format!(
            "dominant failure {:?} ({} of {} traces); applied rule {}",
            tag,
            counts[&tag],
            trajectory.traces.len(),
            rule_id
        ),
        None => format!("no dominant failure; applied rule {rule_id}"),
    };
    let mut provenance = scaffold.provenance.clone();
    provenance.push(rule_id.clone());
    let next = Scaffold {
        generation: scaffold.generation + 1,
        knobs,
        provenance,
    };
    let report = ImprovementReport {
        analysis,
        applied_rules: vec![rule_id],
        knob_diff,
    };
    Ok((next, report))
}
