//! Command-line front end: run a loop, replay a log, emit a report.
//!
//! Exit codes: 0 success, 2 configuration error, 3 run error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leverloop_core::envs::EnvKind;
use leverloop_core::error::Error;
use leverloop_core::orchestrator::{run_from_parts, RunOutcome};
use leverloop_core::store::{emit_report_csv, read_events, replay, write_events, RunMode};

#[derive(Parser)]
#[command(name = "leverloop", about = "Deterministic dual-lever self-improvement loop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one loop and persist its artefacts.
    Run {
        /// Task environment: classify, kernel, or denoise.
        #[arg(long)]
        task: EnvKind,
        /// Operating mode: baseline, sia-h, or sia-wh.
        #[arg(long)]
        mode: RunMode,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum generations, overriding the config file.
        #[arg(long)]
        generations: Option<u32>,
        /// TOML config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for the event log, report, and checkpoints.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild and print the report of a logged run.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Rebuild a logged run's report and write it as CSV.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::UnknownKind(_) => 2,
        _ => 3,
    }
}

fn persist_outcome(out_dir: &PathBuf, outcome: &RunOutcome) -> Result<(), Error> {
    std::fs::create_dir_all(out_dir)?;
    write_events(&out_dir.join("events.log"), &outcome.events)?;
    std::fs::write(
        out_dir.join("report.csv"),
        emit_report_csv(&outcome.report),
    )?;
    std::fs::write(
        out_dir.join("policy.ckpt"),
        outcome.final_policy.to_checkpoint()?,
    )?;
    let scaffold_json = serde_json::to_string_pretty(&outcome.final_scaffold)
        .map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(out_dir.join("scaffold.json"), scaffold_json)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            task,
            mode,
            seed,
            generations,
            config,
            out,
        } => {
            let config_text = match &config {
                Some(path) => Some(std::fs::read_to_string(path)?),
                None => None,
            };
            let outcome = run_from_parts(config_text.as_deref(), seed, generations, task, mode)?;
            persist_outcome(&out, &outcome)?;
            let report = &outcome.report;
            println!("task={task} mode={mode} generations={}", report.rows.len());
            println!("initial={:.6}", report.initial);
            println!("sia_h_best={:.6}", report.sia_h_best);
            println!("sia_wh_best={:.6}", report.sia_wh_best);
        }
        Command::Replay { log } => {
            let events = read_events(&log)?;
            let report = replay(&events)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Serde(e.to_string()))?;
            println!("{json}");
        }
        Command::Report { log, csv } => {
            let events = read_events(&log)?;
            let report = replay(&events)?;
            std::fs::write(&csv, emit_report_csv(&report))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
