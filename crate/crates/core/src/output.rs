//! Run-directory files: `trajectory.csv`, `norms.csv`, `summary.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::domain::Norm;
use crate::engine::{ConditionSummary, TrialResult};
use crate::error::Result;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const NORMS_FILE: &str = "norms.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub const TRAJECTORY_HEADER: [&str; 9] = [
    "trial", "round", "agent_id", "effort", "harvest", "wealth", "alive", "punished", "punisher",
];
pub const NORMS_HEADER: [&str; 5] = ["trial", "round", "proposer", "proposal", "winner"];

fn norm_cell(norm: &Norm) -> String {
    norm.to_string()
}

pub fn write_trajectory(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for t in trials {
        for log in &t.logs {
            for a in &log.agents {
                w.write_record([
                    t.trial_index.to_string(),
                    log.round.to_string(),
                    a.id.to_string(),
                    a.effort.to_string(),
                    a.harvest.to_string(),
                    a.wealth.to_string(),
                    u8::from(a.alive).to_string(),
                    u8::from(a.punished).to_string(),
                    u8::from(a.punisher).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per proposal; `winner` is the group norm in force after the round.
pub fn write_norms(path: &Path, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(NORMS_HEADER)?;
    for t in trials {
        for log in &t.logs {
            let winner = norm_cell(&log.group_norm.norm);
            for p in &log.proposals {
                w.write_record([
                    t.trial_index.to_string(),
                    log.round.to_string(),
                    p.proposer.to_string(),
                    norm_cell(&p.norm),
                    winner.clone(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    condition: &'a str,
    #[serde(flatten)]
    summary: &'a ConditionSummary,
    aborted_trials: usize,
}

pub fn write_summary(path: &Path, condition: &str, summary: &ConditionSummary, aborted_trials: usize) -> Result<()> {
    let body = serde_json::to_string_pretty(&SummaryFile {
        condition,
        summary,
        aborted_trials,
    })?;
    fs::write(path, body + "\n")?;
    Ok(())
}

/// Write all three files into `dir` (created if needed); returns their paths.
pub fn write_run_dir(dir: &Path, condition: &str, trials: &[TrialResult], summary: &ConditionSummary) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths = [dir.join(TRAJECTORY_FILE), dir.join(NORMS_FILE), dir.join(SUMMARY_FILE)];
    write_trajectory(&paths[0], trials)?;
    write_norms(&paths[1], trials)?;
    let aborted = trials.iter().filter(|t| t.aborted.is_some()).count();
    write_summary(&paths[2], condition, summary, aborted)?;
    Ok(paths.to_vec())
}
