//! Bootstrap resampling, the Wilcoxon signed-rank test and SEM.

mod bootstrap;
mod wilcoxon;

pub use bootstrap::{bootstrap, bootstrap_replicates, bootstrap_with, BootstrapResult, Direction};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_N, WILCOXON_P_FLOOR};

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Standard error of the mean: sample SD over √n.
pub fn sem(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Statistic(format!("SEM needs at least 2 values, got {}", values.len())));
    }
    Ok(sample_sd(values) / (values.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        // mean 1, squared deviations {1, 1}, sd √2, SEM √2/√2
        assert!((sem(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(sem(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn sem_is_homogeneous(v in prop::collection::vec(-100.0f64..100.0, 2..40), k in -5.0f64..5.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let a = sem(&scaled).unwrap();
            let b = k.abs() * sem(&v).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b));
        }

        #[test]
        fn sem_is_permutation_invariant(v in prop::collection::vec(-100.0f64..100.0, 2..40), rot in 0usize..40) {
            let mut w = v.clone();
            let r = rot % w.len();
            w.rotate_left(r);
            w.reverse();
            let (a, b) = (sem(&v).unwrap(), sem(&w).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
