//! Runners for the composite-face, face-inversion (behavioral and neural)
//! and whole-part experiments.

mod cfe;
mod config;
mod extract;
mod fie;
mod report;
mod threshold;
mod wpe;

pub use cfe::{cfe_pairs, run_cfe, CfePair};
pub use config::ExperimentConfig;
pub use extract::{C2Store, Setup, TestFace};
pub use fie::{run_fie_behavioral, run_fie_neural};
pub use report::{
    read_report_csv, read_trials_csv, write_json, write_report_csv, write_trials_csv, ExperimentReport, ReportRow,
    TrialRow, REPORT_COLUMNS, TRIAL_COLUMNS,
};
pub use threshold::{calibrate_threshold, hit_rate};
pub use wpe::{run_wpe, wpe_eye_region};

use crate::error::{Error, Result};
use crate::hmax::C2Vector;
use crate::stats::{BootstrapResult, WilcoxonResult};

pub const UPRIGHT: &str = "upright";
pub const INVERTED: &str = "inverted";
/// Orientation label of rows that contrast upright with inverted.
pub const UPRIGHT_MINUS_INVERTED: &str = "upright-inverted";
/// Size label of rows comparing two sizes, e.g. `large-small`.
pub fn size_pair_label(a: &str, b: &str) -> String {
    format!("{a}-{b}")
}

fn require_faces(faces: &[TestFace], n: usize, what: &str) -> Result<()> {
    if faces.len() < n {
        return Err(Error::invalid(format!("{what} needs {n} test faces, got {}", faces.len())));
    }
    Ok(())
}

/// Statistic for index resamples: mean of `values` at the drawn indices.
fn index_mean(values: &[f64]) -> impl Fn(&[usize]) -> f64 + Sync + Send + '_ {
    move |s: &[usize]| s.iter().map(|&i| values[i]).sum::<f64>() / s.len() as f64
}

fn c2_distance(a: &C2Vector, b: &C2Vector) -> f64 {
    crate::hmax::dissimilarity(a, b).expect("vectors from one bank")
}

/// Which bootstrap p-value a row carries.
#[derive(Clone, Copy)]
enum PKind {
    None,
    OneSided,
    TwoSided,
}

#[allow(clippy::too_many_arguments)]
fn boot_row(experiment: &str, size: &str, orientation: &str, condition: &str, b: &BootstrapResult, n: usize, kind: PKind) -> ReportRow {
    let (p, p_floored) = match kind {
        PKind::None => (None, false),
        PKind::OneSided => (Some(b.p_one_sided), b.p_one_sided_floored),
        PKind::TwoSided => (Some(b.p_two_sided), b.p_two_sided_floored),
    };
    ReportRow {
        experiment: experiment.into(),
        size: size.into(),
        orientation: orientation.into(),
        condition: condition.into(),
        mean: b.estimate,
        sem: b.sem,
        p,
        p_floored,
        n,
    }
}

fn wilcoxon_row(
    experiment: &str,
    size: &str,
    orientation: &str,
    condition: &str,
    values: &[f64],
    w: &WilcoxonResult,
) -> Result<ReportRow> {
    Ok(ReportRow {
        experiment: experiment.into(),
        size: size.into(),
        orientation: orientation.into(),
        condition: condition.into(),
        mean: crate::stats::mean(values),
        sem: crate::stats::sem(values)?,
        p: Some(w.p_two_sided),
        p_floored: w.p_floored,
        n: values.len(),
    })
}

fn plain_row(experiment: &str, size: &str, orientation: &str, condition: &str, values: &[f64]) -> Result<ReportRow> {
    Ok(ReportRow {
        experiment: experiment.into(),
        size: size.into(),
        orientation: orientation.into(),
        condition: condition.into(),
        mean: crate::stats::mean(values),
        sem: crate::stats::sem(values)?,
        p: None,
        p_floored: false,
        n: values.len(),
    })
}
