use crate::error::{Error, Result};

/// Picks θ so that the fraction of `dissims` strictly below θ is as close
/// as possible to `target`; ties go to the smaller θ.
///
/// Candidates are each distinct value (which admits everything smaller) and
/// the next float above the maximum (which admits everything).
pub fn calibrate_threshold(dissims: &[f64], target: f64) -> Result<f64> {
    if dissims.is_empty() {
        return Err(Error::invalid("threshold calibration needs at least one dissimilarity"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target hit rate {target} outside (0, 1)")));
    }
    if dissims.iter().any(|d| !d.is_finite()) {
        return Err(Error::invalid("non-finite dissimilarity"));
    }
    let mut sorted = dissims.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut best = (f64::INFINITY, f64::NAN);
    let mut consider = |theta: f64, below: usize| {
        let gap = (below as f64 / n - target).abs();
        if gap < best.0 {
            best = (gap, theta);
        }
    };
    let mut i = 0;
    while i < sorted.len() {
        consider(sorted[i], i);
        let v = sorted[i];
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
    }
    consider(sorted[sorted.len() - 1].next_up(), sorted.len());
    Ok(best.1)
}

/// Fraction of `dissims` judged "same" (strictly below `theta`).
pub fn hit_rate(dissims: &[f64], theta: f64) -> f64 {
    dissims.iter().filter(|&&d| d < theta).count() as f64 / dissims.len() as f64
}
