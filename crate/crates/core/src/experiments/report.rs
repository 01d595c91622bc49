use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Column order of `report.csv`.
pub const REPORT_COLUMNS: [&str; 9] = ["experiment", "size", "orientation", "condition", "mean", "sem", "p", "p_floored", "n"];

/// Column order of `trials.csv`.
pub const TRIAL_COLUMNS: [&str; 9] =
    ["experiment", "size", "orientation", "condition", "trial_id", "stimuli", "value_a", "value_b", "judgment"];

/// One (experiment, size, orientation, condition) summary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub size: String,
    pub orientation: String,
    pub condition: String,
    pub mean: f64,
    pub sem: f64,
    /// Empty for plain condition means.
    pub p: Option<f64>,
    pub p_floored: bool,
    pub n: usize,
}

/// One raw trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub experiment: String,
    pub size: String,
    pub orientation: String,
    pub condition: String,
    pub trial_id: usize,
    /// Stimulus ids joined with `|`.
    pub stimuli: String,
    pub value_a: f64,
    pub value_b: f64,
    pub judgment: f64,
}

/// Output of one experiment runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub rng: String,
    /// Hash over the model config, stimulus parameters, experiment config
    /// and bank hashes.
    pub config_hash: String,
    pub model_config_hash: String,
    pub bank_hashes: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    /// Number of raw trials the runner produced; equals `trials.len()`.
    pub declared_trials: usize,
    #[serde(skip)]
    pub trials: Vec<TrialRow>,
    /// Experiment-specific nested results.
    pub details: serde_json::Value,
}

impl ExperimentReport {
    pub fn row(&self, size: &str, orientation: &str, condition: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.size == size && r.orientation == orientation && r.condition == condition)
    }
}

fn fmt_num(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// Writes `report.csv` rows of several reports.
pub fn write_report_csv(path: &Path, reports: &[&ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_COLUMNS)?;
    for rep in reports {
        for r in &rep.rows {
            w.write_record([
                r.experiment.clone(),
                r.size.clone(),
                r.orientation.clone(),
                r.condition.clone(),
                fmt_num(r.mean),
                fmt_num(r.sem),
                r.p.map(fmt_num).unwrap_or_default(),
                r.p_floored.to_string(),
                r.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `trials.csv` rows of several reports.
pub fn write_trials_csv(path: &Path, reports: &[&ExperimentReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_COLUMNS)?;
    for rep in reports {
        for t in &rep.trials {
            w.write_record([
                t.experiment.clone(),
                t.size.clone(),
                t.orientation.clone(),
                t.condition.clone(),
                t.trial_id.to_string(),
                t.stimuli.clone(),
                fmt_num(t.value_a),
                fmt_num(t.value_b),
                fmt_num(t.judgment),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads back `trials.csv`.
pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Reads back `report.csv`.
pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        ExperimentReport {
            experiment: "cfe".into(),
            seed: 3,
            rng: "x".into(),
            config_hash: "h".into(),
            model_config_hash: "m".into(),
            bank_hashes: vec![],
            rows: vec![ReportRow {
                experiment: "cfe".into(),
                size: "large".into(),
                orientation: "upright".into(),
                condition: "aligned".into(),
                mean: 0.75,
                sem: 0.1,
                p: None,
                p_floored: false,
                n: 20,
            }],
            declared_trials: 1,
            trials: vec![TrialRow {
                experiment: "cfe".into(),
                size: "large".into(),
                orientation: "upright".into(),
                condition: "aligned".into(),
                trial_id: 0,
                stimuli: "a|b".into(),
                value_a: 0.1,
                value_b: 0.2,
                judgment: 1.0,
            }],
            details: serde_json::Value::Null,
        }
    }

    #[test]
    fn csv_round_trip_and_columns() {
        let dir = tempfile::tempdir().unwrap();
        let rep = sample();
        let rp = dir.path().join("report.csv");
        let tp = dir.path().join("trials.csv");
        write_report_csv(&rp, &[&rep]).unwrap();
        write_trials_csv(&tp, &[&rep]).unwrap();
        let header = std::fs::read_to_string(&rp).unwrap();
        assert_eq!(header.lines().next().unwrap(), REPORT_COLUMNS.join(","));
        let header = std::fs::read_to_string(&tp).unwrap();
        assert_eq!(header.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
        assert_eq!(read_report_csv(&rp).unwrap(), rep.rows);
        assert_eq!(read_trials_csv(&tp).unwrap(), rep.trials);
    }
}
