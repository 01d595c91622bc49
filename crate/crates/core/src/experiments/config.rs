use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmax::SizeClass;

/// Experiment-level parameters shared by all runners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cfe_faces: usize,
    pub wpe_faces: usize,
    pub fie_faces: usize,
    pub sizes: Vec<SizeClass>,
    pub cfe_bootstrap_runs: usize,
    pub wpe_bootstrap_runs: usize,
    pub fie_bootstrap_runs: usize,
    /// Templates drawn per bootstrap run in the coverage control.
    pub coverage_subset_large: usize,
    pub coverage_subset_medium: usize,
    /// Upright mean-response band for the neural control, inclusive.
    pub neural_band: (f64, f64),
    pub target_hit_rate: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cfe_faces: 20,
            wpe_faces: 20,
            fie_faces: 50,
            sizes: SizeClass::ALL.to_vec(),
            cfe_bootstrap_runs: 1000,
            wpe_bootstrap_runs: 1000,
            fie_bootstrap_runs: 10_000,
            coverage_subset_large: 100,
            coverage_subset_medium: 150,
            neural_band: (0.75, 0.80),
            target_hit_rate: 0.75,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("experiment config: {m}")));
        if self.cfe_faces < 3 || self.wpe_faces < 3 || self.fie_faces < 2 {
            return bad("face counts must be at least 3 (CFE, WPE) and 2 (FIE)");
        }
        if self.sizes.is_empty() {
            return bad("no tuning sizes selected");
        }
        let mut seen = self.sizes.clone();
        seen.sort_by_key(|s| s.k());
        seen.dedup();
        if seen.len() != self.sizes.len() {
            return bad("tuning sizes listed twice");
        }
        if self.cfe_bootstrap_runs == 0 || self.wpe_bootstrap_runs == 0 || self.fie_bootstrap_runs == 0 {
            return bad("bootstrap run counts must be positive");
        }
        if self.coverage_subset_large == 0 || self.coverage_subset_medium == 0 {
            return bad("coverage subset sizes must be positive");
        }
        let (lo, hi) = self.neural_band;
        if !(lo < hi) {
            return bad("neural band lower bound must be below the upper bound");
        }
        if !(self.target_hit_rate > 0.0 && self.target_hit_rate < 1.0) {
            return bad("target hit rate must lie in (0, 1)");
        }
        Ok(())
    }

    /// Templates per coverage-control run for `size`; `None` means all.
    pub fn coverage_subset(&self, size: SizeClass) -> Option<usize> {
        match size {
            SizeClass::Large => Some(self.coverage_subset_large),
            SizeClass::Medium => Some(self.coverage_subset_medium),
            SizeClass::Small => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.coverage_subset(SizeClass::Large), Some(100));
        assert_eq!(c.coverage_subset(SizeClass::Medium), Some(150));
        assert_eq!(c.coverage_subset(SizeClass::Small), None);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig { neural_band: (0.8, 0.75), ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { target_hit_rate: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { cfe_faces: 1, ..Default::default() };
        assert!(c.validate().is_err());
        c = ExperimentConfig { sizes: vec![SizeClass::Large, SizeClass::Large], ..Default::default() };
        assert!(c.validate().is_err());
    }
}
