use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Sign of the hypothesized effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// The statistic is hypothesized to be positive.
    Greater,
    /// The statistic is hypothesized to be negative.
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Statistic on the original sample.
    pub estimate: f64,
    /// Standard deviation of the replicate statistics.
    pub sem: f64,
    /// Fraction of replicates on the wrong side of zero (ties count as
    /// wrong), floored at `1 / n_runs`.
    pub p_one_sided: f64,
    /// `2 * min(fraction ≤ 0, fraction ≥ 0)`, capped at 1 and floored at
    /// `1 / n_runs`.
    pub p_two_sided: f64,
    /// Unfloored one-sided fraction.
    pub p_one_sided_raw: f64,
    /// True when the floor replaced the one-sided fraction.
    pub p_one_sided_floored: bool,
    /// True when the floor replaced the two-sided value.
    pub p_two_sided_floored: bool,
    pub replicate_mean: f64,
    pub direction: Direction,
    pub n_runs: usize,
    pub seed: u64,
}

impl BootstrapResult {
    /// Summarizes precomputed replicate statistics. Replicates from
    /// [`bootstrap_replicates`] with equal `(seed, n_samples)` share their
    /// resamples, so per-replicate differences of two statistics give a
    /// paired comparison.
    pub fn from_replicates(estimate: f64, reps: &[f64], direction: Direction, seed: u64) -> Result<Self> {
        if reps.is_empty() {
            return Err(Error::Statistic("no bootstrap replicates".into()));
        }
        Ok(summarize(estimate, reps, direction, seed))
    }
}

fn summarize(estimate: f64, reps: &[f64], direction: Direction, seed: u64) -> BootstrapResult {
    let n = reps.len() as f64;
    let le = reps.iter().filter(|&&r| r <= 0.0).count() as f64 / n;
    let ge = reps.iter().filter(|&&r| r >= 0.0).count() as f64 / n;
    let raw_one = match direction {
        Direction::Greater => le,
        Direction::Less => ge,
    };
    let raw_two = (2.0 * le.min(ge)).min(1.0);
    let floor = 1.0 / n;
    BootstrapResult {
        estimate,
        sem: super::sample_sd(reps),
        p_one_sided: raw_one.max(floor),
        p_two_sided: raw_two.max(floor),
        p_one_sided_raw: raw_one,
        p_one_sided_floored: raw_one < floor,
        p_two_sided_floored: raw_two < floor,
        replicate_mean: super::mean(reps),
        direction,
        n_runs: reps.len(),
        seed,
    }
}

fn check(n_samples: usize, n_runs: usize) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::Statistic(format!("bootstrap needs at least 2 samples, got {n_samples}")));
    }
    if n_runs == 0 {
        return Err(Error::Statistic("bootstrap needs at least one run".into()));
    }
    Ok(())
}

/// Replicate statistics. Replicate `r` resamples with a stream derived from
/// `(seed, r)` and then hands that same stream to `statistic`, so the set is
/// independent of scheduling. The statistic may return several values per
/// replicate.
pub fn bootstrap_replicates<T, R, F>(samples: &[T], statistic: F, n_runs: usize, seed: u64) -> Result<Vec<R>>
where
    T: Clone + Sync + Send,
    R: Send,
    F: Fn(&[T], &mut Rng) -> R + Sync + Send,
{
    check(samples.len(), n_runs)?;
    let n = samples.len();
    Ok(crate::par::map_range(n_runs, |r| {
        let mut g = rng::stream(rng::derive(seed, r as u64));
        let resample: Vec<T> = (0..n).map(|_| samples[g.random_range(0..n)].clone()).collect();
        statistic(&resample, &mut g)
    }))
}

/// Bootstrap where the statistic also draws from the replicate's stream
/// (e.g. to pick random feature subsets per run). The point estimate is
/// the statistic on the original sample with a stream derived from
/// `(seed, "estimate")`.
pub fn bootstrap_with<T, F>(
    samples: &[T],
    statistic: F,
    n_runs: usize,
    seed: u64,
    direction: Direction,
) -> Result<BootstrapResult>
where
    T: Clone + Sync + Send,
    F: Fn(&[T], &mut Rng) -> f64 + Sync + Send,
{
    let reps = bootstrap_replicates(samples, &statistic, n_runs, seed)?;
    let mut g = rng::stream(rng::derive_str(seed, "estimate"));
    Ok(summarize(statistic(samples, &mut g), &reps, direction, seed))
}

/// Non-parametric bootstrap of `statistic` over `samples`.
pub fn bootstrap<T, F>(samples: &[T], statistic: F, n_runs: usize, seed: u64, direction: Direction) -> Result<BootstrapResult>
where
    T: Clone + Sync + Send,
    F: Fn(&[T]) -> f64 + Sync + Send,
{
    bootstrap_with(samples, |s: &[T], _: &mut Rng| statistic(s), n_runs, seed, direction)
}
