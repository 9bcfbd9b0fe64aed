//! Run persistence: a line-delimited, self-describing event log, the
//! pure replay path that rebuilds a report from events alone, and the
//! CSV emitter for the per-generation table.
//!
//! Canonical logs carry logical time only (generation and sequence
//! numbers); nothing wall-clock ever enters them.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::RewardDiagnosis;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::rl::{Algorithm, UpdateReport};
use crate::scaffold::ImprovementReport;
use crate::types::{ActionKind, LoopConfig, MetricDirection, Metrics};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Baseline,
    SiaH,
    SiaWh,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunMode::Baseline => f.write_str("baseline"),
            RunMode::SiaH => f.write_str("sia-h"),
            RunMode::SiaWh => f.write_str("sia-wh"),
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(RunMode::Baseline),
            "sia-h" | "sia_h" => Ok(RunMode::SiaH),
            "sia-wh" | "sia_wh" => Ok(RunMode::SiaWh),
            other => Err(Error::UnknownKind(format!("run mode {other}"))),
        }
    }
}

/// Kind-specific event payloads; the serialised tag doubles as the
/// event_kind discriminator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_kind", rename_all = "snake_case")]
pub enum EventPayload {
    RunStart {
        env_kind: EnvKind,
        mode: RunMode,
        metric_direction: MetricDirection,
        env_hash: String,
        config: LoopConfig,
    },
    GenerationStart {
        generation: u32,
    },
    EvaluationDone {
        metrics: Metrics,
    },
    Decision {
        generation: u32,
        action: ActionKind,
        diagnosis: RewardDiagnosis,
        algorithm: Option<Algorithm>,
    },
    HarnessUpdated {
        generation: u32,
        report: ImprovementReport,
        scaffold_hash: String,
    },
    WeightUpdateStep {
        generation: u32,
        step: u32,
        report: UpdateReport,
    },
    GenerationEnd {
        generation: u32,
        scaffold_hash: String,
        policy_hash: String,
        base_hash: String,
        primary_metric: f64,
    },
    RunEnd {
        generations: u32,
        final_metric: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub schema_version: u32,
    pub sequence_no: u64,
    pub config_hash: String,
    pub seed: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

/// One row of the per-generation table. `action` is absent for a
/// generation that only evaluated (the baseline mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub generation: u32,
    pub action: Option<ActionKind>,
    pub algorithm: Option<Algorithm>,
    pub primary_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub initial: f64,
    /// Best metric over the prefix of generations before the first
    /// weight update (the harness-only operating point).
    pub sia_h_best: f64,
    /// Best metric over the whole run.
    pub sia_wh_best: f64,
}

pub fn write_events(path: &Path, events: &[RunEvent]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn events_to_string(events: &[RunEvent]) -> Result<String> {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parse a log, enforcing the schema version and contiguous sequence
/// numbers from 0. A gap reports the first missing sequence_no.
pub fn parse_events(text: &str) -> Result<Vec<RunEvent>> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: RunEvent = serde_json::from_str(line)
            .map_err(|e| Error::Log(format!("line {}: {e}", lineno + 1)))?;
        if event.schema_version != SCHEMA_VERSION {
            return Err(Error::Log(format!(
                "unsupported schema version {} at line {}",
                event.schema_version,
                lineno + 1
            )));
        }
        events.push(event);
    }
    for (i, event) in events.iter().enumerate() {
        if event.sequence_no != i as u64 {
            return Err(Error::LogGap(i as u64));
        }
    }
    if events.is_empty() {
        return Err(Error::Log("empty event log".into()));
    }
    Ok(events)
}

pub fn read_events(path: &Path) -> Result<Vec<RunEvent>> {
    let mut text = String::new();
    let mut reader = BufReader::new(File::open(path)?);
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        text.push_str(&line);
    }
    parse_events(&text)
}

/// Rebuild the run report purely from logged events. No environment is
/// constructed, no policy is executed, and no randomness is drawn; a
/// replayed log therefore yields a byte-identical report.
pub fn replay(events: &[RunEvent]) -> Result<RunReport> {
    let direction = match &events[0].payload {
        EventPayload::RunStart {
            metric_direction, ..
        } => *metric_direction,
        other => {
            return Err(Error::Log(format!(
                "log must begin with run_start, found {other:?}"
            )))
        }
    };

    let mut rows: Vec<ReportRow> = Vec::new();
    for event in events {
        match &event.payload {
            EventPayload::EvaluationDone { metrics } => {
                rows.push(ReportRow {
                    generation: metrics.generation,
                    action: None,
                    algorithm: None,
                    primary_metric: metrics.primary_metric,
                });
            }
            EventPayload::Decision {
                generation,
                action,
                algorithm,
                ..
            } => {
                let row = rows
                    .iter_mut()
                    .rev()
                    .find(|r| r.generation == *generation)
                    .ok_or_else(|| {
                        Error::Log(format!("decision for generation {generation} before its evaluation"))
                    })?;
                row.action = Some(*action);
                row.algorithm = *algorithm;
            }
            _ => {}
        }
    }
    if rows.is_empty() {
        return Err(Error::Log("log contains no evaluations".into()));
    }

    let better = |a: f64, b: f64| -> f64 {
        match direction {
            MetricDirection::HigherBetter => a.max(b),
            MetricDirection::LowerBetter => a.min(b),
        }
    };
    let initial = rows[0].primary_metric;
    let mut sia_h_best = initial;
    let mut sia_wh_best = initial;
    let mut harness_prefix = true;
    for row in &rows {
        sia_wh_best = better(sia_wh_best, row.primary_metric);
        // A generation's metric is measured before its action applies,
        // so the harness-only prefix includes the generation that takes
        // the first weight update but nothing after it.
        if harness_prefix {
            sia_h_best = better(sia_h_best, row.primary_metric);
        }
        if row.action == Some(ActionKind::WeightUpdate) {
            harness_prefix = false;
        }
    }
    Ok(RunReport {
        rows,
        initial,
        sia_h_best,
        sia_wh_best,
    })
}

/// Fixed-precision formatting: 6 significant digits, scientific form,
/// so re-emission is byte-stable.
fn fmt_sig6(v: f64) -> String {
    format!("{v:.5e}")
}

/// Per-generation table plus the three operating-point summary rows.
pub fn emit_report_csv(report: &RunReport) -> String {
    let mut out = String::from("generation,action,algorithm,primary_metric\n");
    for row in &report.rows {
        let action = match row.action {
            Some(ActionKind::HarnessUpdate) => "harness_update",
            Some(ActionKind::WeightUpdate) => "weight_update",
            None => "",
        };
        let algorithm = row.algorithm.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.generation,
            action,
            algorithm,
            fmt_sig6(row.primary_metric)
        );
    }
    let _ = writeln!(out, "initial,,,{}", fmt_sig6(report.initial));
    let _ = writeln!(out, "sia_h_best,,,{}", fmt_sig6(report.sia_h_best));
    let _ = writeln!(out, "sia_wh_best,,,{}", fmt_sig6(report.sia_wh_best));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn event(seq: u64, payload: EventPayload) -> RunEvent {
        RunEvent {
            schema_version: SCHEMA_VERSION,
            sequence_no: seq,
            config_hash: "cfg".into(),
            seed: 1,
            payload,
        }
    }

    fn run_start() -> EventPayload {
        EventPayload::RunStart {
            env_kind: EnvKind::Classify,
            mode: RunMode::SiaWh,
            metric_direction: MetricDirection::HigherBetter,
            env_hash: "env".into(),
            config: LoopConfig::default(),
        }
    }

    fn eval(generation: u32, metric: f64) -> EventPayload {
        EventPayload::EvaluationDone {
            metrics: Metrics::from_rewards(generation, metric, &[metric], BTreeMap::new()),
        }
    }

    fn decision(generation: u32, action: ActionKind, algorithm: Option<Algorithm>) -> EventPayload {
        EventPayload::Decision {
            generation,
            action,
            diagnosis: RewardDiagnosis {
                density: crate::types::RewardKind::DensePerStep,
                zero_fraction: 0.0,
                skewness: 0.0,
                near_zero_expectation: false,
                regression_risk: false,
            },
            algorithm,
        }
    }

    fn sample_log() -> Vec<RunEvent> {
        vec![
            event(0, run_start()),
            event(1, eval(1, 0.3)),
            event(2, decision(1, ActionKind::HarnessUpdate, None)),
            event(3, eval(2, 0.5)),
            event(4, decision(2, ActionKind::WeightUpdate, Some(Algorithm::PpoGae))),
            event(5, eval(3, 0.7)),
            event(
                6,
                EventPayload::RunEnd {
                    generations: 3,
                    final_metric: 0.7,
                },
            ),
        ]
    }

    #[test]
    fn round_trip_through_text() {
        let events = sample_log();
        let text = events_to_string(&events).unwrap();
        let parsed = parse_events(&text).unwrap();
        assert_eq!(parsed, events);
        assert_eq!(events_to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn gap_names_first_missing_sequence_no() {
        let mut events = sample_log();
        events.remove(2);
        let text = events_to_string(&events).unwrap();
        match parse_events(&text) {
            Err(Error::LogGap(2)) => {}
            other => panic!("expected LogGap(2), got {other:?}"),
        }
    }

    #[test]
    fn truncated_tail_still_parses_but_replay_reflects_prefix() {
        let events = sample_log();
        let report = replay(&events[..4]).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.initial, 0.3);
        assert_eq!(report.sia_wh_best, 0.5);
    }

    #[test]
    fn replay_report_operating_points() {
        let report = replay(&sample_log()).unwrap();
        assert_eq!(report.initial, 0.3);
        // Harness-only prefix covers generations 1 and 2; the weight
        // update at generation 2 closes the prefix after it.
        assert_eq!(report.sia_h_best, 0.5);
        assert_eq!(report.sia_wh_best, 0.7);
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.rows[2].action, None);
    }

    #[test]
    fn replay_requires_run_start() {
        let events = vec![event(0, eval(1, 0.1))];
        assert!(replay(&events).is_err());
    }

    #[test]
    fn lower_better_operating_points() {
        let mut events = sample_log();
        if let EventPayload::RunStart {
            metric_direction, ..
        } = &mut events[0].payload
        {
            *metric_direction = MetricDirection::LowerBetter;
        }
        let report = replay(&events).unwrap();
        assert_eq!(report.initial, 0.3);
        assert_eq!(report.sia_h_best, 0.3);
        assert_eq!(report.sia_wh_best, 0.3);
    }

    #[test]
    fn csv_shape_and_stability() {
        let report = replay(&sample_log()).unwrap();
        let csv = emit_report_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 3 + 3);
        assert_eq!(lines[0], "generation,action,algorithm,primary_metric");
        assert!(lines[1].starts_with("1,harness_update,,"));
        assert!(lines[2].starts_with("2,weight_update,ppo_gae,"));
        assert!(lines[4].starts_with("initial,,,"));
        assert_eq!(csv, emit_report_csv(&report));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(1.2917312), "1.29173e0");
        assert_eq!(fmt_sig6(0.00012345678), "1.23457e-4");
        assert_eq!(fmt_sig6(0.0), "0.00000e0");
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join("leverloop-store-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("events.log");
        let events = sample_log();
        write_events(&path, &events).unwrap();
        assert_eq!(read_events(&path).unwrap(), events);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let mut events = sample_log();
        events[0].schema_version = 99;
        let text = events_to_string(&events).unwrap();
        assert!(matches!(parse_events(&text), Err(Error::Log(_))));
    }
}
