use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

/// Smallest p-value reported by the normal approximation.
pub const WILCOXON_P_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Non-zero differences used.
    pub n: usize,
    /// Sum of (average) ranks of the positive differences.
    pub w_plus: f64,
    pub p_two_sided: f64,
    /// P(W+ ≥ observed): evidence that differences tend to be positive.
    pub p_greater: f64,
    /// P(W+ ≤ observed).
    pub p_less: f64,
    pub exact: bool,
    /// True when a p-value hit [`WILCOXON_P_FLOOR`].
    pub p_floored: bool,
}

/// Average ranks of `|diffs|`, doubled so ties stay integral.
fn doubled_ranks(abs: &[f64]) -> (Vec<u64>, f64) {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, times two
        let doubled = (i + 1 + j + 1) as u64;
        for &o in &order[i..=j] {
            ranks[o] = doubled;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

/// Wilcoxon signed-rank test. Exact zeros are dropped; ties share average
/// ranks. Up to [`EXACT_MAX_N`] differences the null distribution of W+ is
/// enumerated exactly; above that a tie-corrected normal approximation with
/// continuity correction is used.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<WilcoxonResult> {
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Statistic("non-finite difference".into()));
    }
    let nz: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return Err(Error::Statistic("all differences are zero".into()));
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (ranks, tie_term) = doubled_ranks(&abs);
    let w2: u64 = nz.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let w_plus = w2 as f64 / 2.0;

    let (p_greater, p_less, exact) = if n <= EXACT_MAX_N {
        let total: u64 = ranks.iter().sum();
        let mut counts = vec![0f64; total as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let all = 2f64.powi(n as i32);
        let ge: f64 = counts[w2 as usize..].iter().sum();
        let le: f64 = counts[..=w2 as usize].iter().sum();
        (ge / all, le / all, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sd = var.sqrt();
        let upper = 0.5 * erfc(((w_plus - mean - 0.5) / sd) / std::f64::consts::SQRT_2);
        let lower = 0.5 * erfc((-(w_plus - mean + 0.5) / sd) / std::f64::consts::SQRT_2);
        (upper.min(1.0), lower.min(1.0), false)
    };
    let two = (2.0 * p_greater.min(p_less)).min(1.0);
    let floored = !exact && (two < WILCOXON_P_FLOOR || p_greater < WILCOXON_P_FLOOR || p_less < WILCOXON_P_FLOOR);
    let floor = |p: f64| if exact { p } else { p.max(WILCOXON_P_FLOOR) };
    Ok(WilcoxonResult {
        n,
        w_plus,
        p_two_sided: floor(two),
        p_greater: floor(p_greater),
        p_less: floor(p_less),
        exact,
        p_floored: floored,
    })
}
