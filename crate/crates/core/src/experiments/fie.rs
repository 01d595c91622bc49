use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hmax::C2Vector;
use crate::rng::{self, Rng};
use crate::stats::{bootstrap_replicates, wilcoxon_signed_rank, BootstrapResult, Direction, WilcoxonResult};
use crate::stimulus::{invert, Image};

use super::extract::{C2Store, Setup, TestFace};
use super::report::{ExperimentReport, ReportRow, TrialRow};
use super::{
    boot_row, plain_row, require_faces, size_pair_label, wilcoxon_row, PKind, INVERTED, UPRIGHT,
    UPRIGHT_MINUS_INVERTED,
};

/// C2 of every face against one bank as a dense `faces × templates` table.
struct Table {
    n_templates: usize,
    values: Vec<f32>,
}

impl Table {
    fn new(c2: &[C2Vector]) -> Self {
        let n_templates = c2[0].len();
        Self { n_templates, values: c2.iter().flat_map(|v| v.values.iter().copied()).collect() }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n_templates..(i + 1) * self.n_templates]
    }

    fn n_faces(&self) -> usize {
        self.values.len() / self.n_templates
    }

    /// Euclidean distance between faces `i` and `j` over `subset` templates
    /// (all when `None`).
    fn distance(&self, i: usize, j: usize, subset: Option<&[usize]>) -> f64 {
        let (a, b) = (self.row(i), self.row(j));
        let sq = |t: usize| {
            let d = f64::from(a[t]) - f64::from(b[t]);
            d * d
        };
        match subset {
            Some(s) => s.iter().map(|&t| sq(t)).sum::<f64>().sqrt(),
            None => (0..self.n_templates).map(sq).sum::<f64>().sqrt(),
        }
    }

    fn distances(&self) -> Vec<f64> {
        let n = self.n_faces();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = self.distance(i, j, None);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        d
    }

    /// Mean response of each template over all faces.
    fn template_means(&self) -> Vec<f64> {
        let n = self.n_faces() as f64;
        (0..self.n_templates)
            .map(|t| (0..self.n_faces()).map(|i| f64::from(self.row(i)[t])).sum::<f64>() / n)
            .collect()
    }
}

/// Occurrence count of each face in a resample.
fn weights(resample: &[usize], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for &i in resample {
        w[i] += 1.0;
    }
    w
}

/// Mean of `pair(i, j)` over pairs of distinct faces, weighted by how
/// often each face occurs in the resample (`w_i · w_j`).
fn weighted_pair_mean(w: &[f64], mut pair: impl FnMut(usize, usize) -> f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..w.len() {
        if w[i] == 0.0 {
            continue;
        }
        for j in i + 1..w.len() {
            let ww = w[i] * w[j];
            if ww > 0.0 {
                num += ww * pair(i, j);
                den += ww;
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Which pairwise quantity a behavioral replicate reports.
#[derive(Clone, Copy)]
enum Quantity {
    Upright,
    Inverted,
    Effect,
}

fn pick(q: Quantity, u: f64, v: f64) -> f64 {
    match q {
        Quantity::Upright => u,
        Quantity::Inverted => v,
        Quantity::Effect => u - v,
    }
}

#[derive(Debug, Clone, Serialize)]
struct BehavioralSize {
    size: String,
    templates_per_run: usize,
    upright: BootstrapResult,
    inverted: BootstrapResult,
    effect: BootstrapResult,
}

#[derive(Debug, Clone, Serialize)]
struct Comparison {
    sizes: String,
    result: BootstrapResult,
}

#[derive(Debug, Clone, Serialize)]
struct BehavioralDetails {
    faces: usize,
    pairs: usize,
    bootstrap_runs: usize,
    full: Vec<BehavioralSize>,
    full_comparisons: Vec<Comparison>,
    coverage: Vec<BehavioralSize>,
    coverage_comparisons: Vec<Comparison>,
}

fn upright_and_inverted(setup: &Setup, faces: &[TestFace], store: &mut C2Store) -> Result<Vec<(Table, Table)>> {
    let banks = setup.banks_in_order()?;
    let n = faces.len();
    let images: Vec<Image> =
        faces.iter().map(|f| f.image.clone()).chain(faces.iter().map(|f| invert(&f.image))).collect();
    let c2s = store.extract(setup.model, &banks, &images)?;
    Ok(c2s.iter().map(|c| (Table::new(&c[..n]), Table::new(&c[n..]))).collect())
}

/// Bootstraps the three quantities for one size, with the given per-run
/// template subset size (`None` = all templates).
fn behavioral_size(
    up: &Table,
    inv: &Table,
    subset: Option<usize>,
    runs: usize,
    seed: u64,
) -> Result<([Vec<f64>; 3], [f64; 3])> {
    let n = up.n_faces();
    let samples: Vec<usize> = (0..n).collect();
    let (du, dv) = (up.distances(), inv.distances());
    let full = |w: &[f64], q: Quantity| weighted_pair_mean(w, |i, j| pick(q, du[i * n + j], dv[i * n + j]));
    let t = up.n_templates;
    if let Some(m) = subset {
        if m > t {
            return Err(Error::invalid(format!("coverage subset {m} exceeds bank size {t}")));
        }
    }
    let triples: Vec<[f64; 3]> = bootstrap_replicates(
        &samples,
        |s: &[usize], g: &mut Rng| {
            let w = weights(s, n);
            match subset {
                None => [full(&w, Quantity::Upright), full(&w, Quantity::Inverted), full(&w, Quantity::Effect)],
                Some(m) => {
                    let chosen = sample(g, t, m).into_vec();
                    let mut d = vec![(0.0, 0.0); n * n];
                    for i in 0..n {
                        for j in i + 1..n {
                            if w[i] > 0.0 && w[j] > 0.0 {
                                d[i * n + j] = (up.distance(i, j, Some(&chosen)), inv.distance(i, j, Some(&chosen)));
                            }
                        }
                    }
                    let q = |q: Quantity| weighted_pair_mean(&w, |i, j| pick(q, d[i * n + j].0, d[i * n + j].1));
                    [q(Quantity::Upright), q(Quantity::Inverted), q(Quantity::Effect)]
                }
            }
        },
        runs,
        seed,
    )?;
    let reps: [Vec<f64>; 3] = std::array::from_fn(|k| triples.iter().map(|r| r[k]).collect());
    let ones = vec![1.0; n];
    let est = match subset {
        None => [full(&ones, Quantity::Upright), full(&ones, Quantity::Inverted), full(&ones, Quantity::Effect)],
        // with random subsets the natural point estimate is the replicate mean
        Some(_) => [crate::stats::mean(&reps[0]), crate::stats::mean(&reps[1]), crate::stats::mean(&reps[2])],
    };
    Ok((reps, est))
}

/// Behavioral face inversion effect: mean pairwise C2 dissimilarity of
/// upright minus inverted faces per size, bootstrapped over faces, plus the
/// coverage control with random template subsets per run.
pub fn run_fie_behavioral(setup: &Setup, faces: &[TestFace], store: &mut C2Store) -> Result<ExperimentReport> {
    let cfg = setup.config;
    cfg.validate()?;
    let n = cfg.fie_faces;
    require_faces(faces, n, "the face inversion experiment")?;
    let faces = &faces[..n];
    let banks = setup.banks_in_order()?;
    let tables = upright_and_inverted(setup, faces, store)?;
    let runs = cfg.fie_bootstrap_runs;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let mut details = BehavioralDetails {
        faces: n,
        pairs: n * (n - 1) / 2,
        bootstrap_runs: runs,
        full: vec![],
        full_comparisons: vec![],
        coverage: vec![],
        coverage_comparisons: vec![],
    };
    for (variant, prefix) in [("full", ""), ("coverage", "coverage_")] {
        let seed = rng::derive_str(cfg.seed, &format!("fie/{variant}"));
        let mut effects: Vec<(&str, Vec<f64>, f64)> = Vec::new();
        for (bank, (up, inv)) in banks.iter().zip(&tables) {
            let size = bank.size_class();
            let subset = if variant == "full" { None } else { cfg.coverage_subset(size).map(|m| m.min(bank.len())) };
            let (reps, est) = behavioral_size(up, inv, subset, runs, seed)?;
            let r = |i: usize, d: Direction| BootstrapResult::from_replicates(est[i], &reps[i], d, seed);
            let res = BehavioralSize {
                size: size.name().into(),
                templates_per_run: subset.unwrap_or(bank.len()),
                upright: r(0, Direction::Greater)?,
                inverted: r(1, Direction::Greater)?,
                effect: r(2, Direction::Greater)?,
            };
            let name = size.name();
            rows.push(boot_row("fie", name, UPRIGHT, &format!("{prefix}dissimilarity"), &res.upright, n, PKind::None));
            rows.push(boot_row("fie", name, INVERTED, &format!("{prefix}dissimilarity"), &res.inverted, n, PKind::None));
            rows.push(boot_row("fie", name, UPRIGHT_MINUS_INVERTED, &format!("{prefix}effect"), &res.effect, n, PKind::OneSided));
            if variant == "full" {
                let (du, dv) = (up.distances(), inv.distances());
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        trials.push(TrialRow {
                            experiment: "fie".into(),
                            size: name.into(),
                            orientation: UPRIGHT_MINUS_INVERTED.into(),
                            condition: "pair".into(),
                            trial_id: k,
                            stimuli: format!("{}|{}", faces[i].id, faces[j].id),
                            value_a: du[i * n + j],
                            value_b: dv[i * n + j],
                            judgment: du[i * n + j] - dv[i * n + j],
                        });
                        k += 1;
                    }
                }
                details.full.push(res.clone());
            } else {
                details.coverage.push(res.clone());
            }
            effects.push((name, reps[2].clone(), res.effect.estimate));
        }
        for a in 0..effects.len() {
            for b in a + 1..effects.len() {
                let diffs: Vec<f64> = effects[a].1.iter().zip(&effects[b].1).map(|(x, y)| x - y).collect();
                let res = BootstrapResult::from_replicates(effects[a].2 - effects[b].2, &diffs, Direction::Greater, seed)?;
                let label = size_pair_label(effects[a].0, effects[b].0);
                rows.push(boot_row("fie", &label, UPRIGHT_MINUS_INVERTED, &format!("{prefix}effect_diff"), &res, n, PKind::TwoSided));
                let cmp = Comparison { sizes: label, result: res };
                if variant == "full" {
                    details.full_comparisons.push(cmp);
                } else {
                    details.coverage_comparisons.push(cmp);
                }
            }
        }
    }
    Ok(ExperimentReport {
        experiment: "fie".into(),
        seed: cfg.seed,
        rng: rng::RNG_ALGORITHM.into(),
        config_hash: setup.config_hash(),
        model_config_hash: setup.model.config().hash(),
        bank_hashes: setup.bank_hashes(),
        rows,
        declared_trials: banks.len() * n * (n - 1) / 2,
        trials,
        details: serde_json::to_value(details)?,
    })
}

/// Per-template mean responses (upright, inverted) and their difference.
fn neural_effects(up: &Table, inv: &Table) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mu = up.template_means();
    let mi = inv.template_means();
    let e = mu.iter().zip(&mi).map(|(a, b)| a - b).collect();
    (mu, mi, e)
}

#[derive(Debug, Clone, Serialize)]
struct NeuralSize {
    size: String,
    templates: usize,
    upright_mean: f64,
    inverted_mean: f64,
    effect_mean: f64,
    wilcoxon: WilcoxonResult,
}

#[derive(Debug, Clone, Serialize)]
struct NeuralComparison {
    sizes: String,
    paired_templates: usize,
    mean_difference: f64,
    wilcoxon: WilcoxonResult,
}

#[derive(Debug, Clone, Serialize)]
struct NeuralDetails {
    faces: usize,
    response_band: (f64, f64),
    full: Vec<NeuralSize>,
    full_comparisons: Vec<NeuralComparison>,
    band_counts_before_equalizing: Vec<(String, usize)>,
    band_templates: Vec<(String, Vec<usize>)>,
    band: Vec<NeuralSize>,
    band_comparisons: Vec<NeuralComparison>,
}

/// Template indices with upright mean inside `[lo, hi]`, then randomly
/// reduced to the smallest count over sizes.
fn band_selection(
    names: &[&str],
    upright_means: &[Vec<f64>],
    band: (f64, f64),
    seed: u64,
) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    let inside: Vec<Vec<usize>> = upright_means
        .iter()
        .map(|m| (0..m.len()).filter(|&t| m[t] >= band.0 && m[t] <= band.1).collect())
        .collect();
    let empty: Vec<&str> = names.iter().zip(&inside).filter(|(_, v)| v.is_empty()).map(|(n, _)| *n).collect();
    if !empty.is_empty() {
        return Err(Error::Calibration(format!(
            "no template of size {} has an upright mean response in [{}, {}]; recalibrate sigma",
            empty.join(", "),
            band.0,
            band.1
        )));
    }
    let counts: Vec<usize> = inside.iter().map(Vec::len).collect();
    let m = *counts.iter().min().expect("at least one size");
    let chosen = names
        .iter()
        .zip(&inside)
        .map(|(name, v)| {
            let mut g = rng::stream(rng::derive_str(seed, &format!("fie-neural/band/{name}")));
            sample(&mut g, v.len(), m).into_iter().map(|i| v[i]).collect()
        })
        .collect();
    Ok((counts, chosen))
}

/// Neural face inversion effect: per-template mean response over faces,
/// upright minus inverted, tested with Wilcoxon per size and between sizes
/// (paired by template position), then again on templates whose upright
/// mean lies in the configured band with counts equalized across sizes.
pub fn run_fie_neural(setup: &Setup, faces: &[TestFace], store: &mut C2Store) -> Result<ExperimentReport> {
    let cfg = setup.config;
    cfg.validate()?;
    let n = cfg.fie_faces;
    require_faces(faces, n, "the neural face inversion experiment")?;
    let faces = &faces[..n];
    let banks = setup.banks_in_order()?;
    let tables = upright_and_inverted(setup, faces, store)?;
    let names: Vec<&str> = banks.iter().map(|b| b.size_class().name()).collect();
    let per_size: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = tables.iter().map(|(u, i)| neural_effects(u, i)).collect();

    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let summarize = |rows: &mut Vec<ReportRow>, prefix: &str, sel: &[Vec<usize>]| -> Result<(Vec<NeuralSize>, Vec<NeuralComparison>)> {
        let mut sizes = Vec::new();
        let mut effects: Vec<Vec<f64>> = Vec::new();
        for ((name, (mu, mi, e)), idx) in names.iter().zip(&per_size).zip(sel) {
            let take = |v: &[f64]| -> Vec<f64> { idx.iter().map(|&t| v[t]).collect() };
            let (mu, mi, e) = (take(mu), take(mi), take(e));
            let w = wilcoxon_signed_rank(&e)?;
            rows.push(plain_row("fie-neural", name, UPRIGHT, &format!("{prefix}response"), &mu)?);
            rows.push(plain_row("fie-neural", name, INVERTED, &format!("{prefix}response"), &mi)?);
            rows.push(wilcoxon_row("fie-neural", name, UPRIGHT_MINUS_INVERTED, &format!("{prefix}effect"), &e, &w)?);
            sizes.push(NeuralSize {
                size: (*name).into(),
                templates: e.len(),
                upright_mean: crate::stats::mean(&mu),
                inverted_mean: crate::stats::mean(&mi),
                effect_mean: crate::stats::mean(&e),
                wilcoxon: w,
            });
            effects.push(e);
        }
        let mut comparisons = Vec::new();
        for a in 0..effects.len() {
            for b in a + 1..effects.len() {
                let m = effects[a].len().min(effects[b].len());
                let d: Vec<f64> = effects[a][..m].iter().zip(&effects[b][..m]).map(|(x, y)| x - y).collect();
                let w = wilcoxon_signed_rank(&d)?;
                let label = size_pair_label(names[a], names[b]);
                rows.push(wilcoxon_row("fie-neural", &label, UPRIGHT_MINUS_INVERTED, &format!("{prefix}effect_diff"), &d, &w)?);
                comparisons.push(NeuralComparison {
                    sizes: label,
                    paired_templates: m,
                    mean_difference: crate::stats::mean(&d),
                    wilcoxon: w,
                });
            }
        }
        Ok((sizes, comparisons))
    };
    let all: Vec<Vec<usize>> = per_size.iter().map(|(mu, _, _)| (0..mu.len()).collect()).collect();
    let (full, full_comparisons) = summarize(&mut rows, "", &all)?;
    for (name, (mu, mi, e)) in names.iter().zip(&per_size) {
        for t in 0..mu.len() {
            trials.push(TrialRow {
                experiment: "fie-neural".into(),
                size: (*name).into(),
                orientation: UPRIGHT_MINUS_INVERTED.into(),
                condition: "template".into(),
                trial_id: t,
                stimuli: format!("template:{t}"),
                value_a: mu[t],
                value_b: mi[t],
                judgment: e[t],
            });
        }
    }
    let upright_means: Vec<Vec<f64>> = per_size.iter().map(|(mu, _, _)| mu.clone()).collect();
    let (counts, chosen) = band_selection(&names, &upright_means, cfg.neural_band, cfg.seed)?;
    let (band, band_comparisons) = summarize(&mut rows, "band_", &chosen)?;
    let details = NeuralDetails {
        faces: n,
        response_band: cfg.neural_band,
        full,
        full_comparisons,
        band_counts_before_equalizing: names.iter().map(|s| s.to_string()).zip(counts).collect(),
        band_templates: names.iter().map(|s| s.to_string()).zip(chosen).collect(),
        band,
        band_comparisons,
    };
    Ok(ExperimentReport {
        experiment: "fie-neural".into(),
        seed: cfg.seed,
        rng: rng::RNG_ALGORITHM.into(),
        config_hash: setup.config_hash(),
        model_config_hash: setup.model.config().hash(),
        bank_hashes: setup.bank_hashes(),
        rows,
        declared_trials: banks.iter().map(|b| b.len()).sum(),
        trials,
        details: serde_json::to_value(details)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[&[f32]]) -> Table {
        let c: Vec<C2Vector> = rows.iter().map(|r| C2Vector { values: r.to_vec(), bank_hash: "h".into() }).collect();
        Table::new(&c)
    }

    #[test]
    fn self_comparison_has_zero_effects() {
        let t = table(&[&[0.1, 0.5, 0.9], &[0.3, 0.2, 0.8], &[0.7, 0.7, 0.1]]);
        let n = t.n_faces();
        let d = t.distances();
        let w = weights(&[0, 1, 2, 2], n);
        assert_eq!(weighted_pair_mean(&w, |i, j| d[i * n + j] - d[i * n + j]), 0.0);
        let (_, _, e) = neural_effects(&t, &t);
        assert!(e.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weighted_pair_mean_matches_expansion() {
        // resample [0, 0, 1, 2]: pairs (0,1)×2, (0,2)×2, (1,2)×1, self-pairs excluded
        let vals = [[0.0, 1.0, 2.0], [1.0, 0.0, 4.0], [2.0, 4.0, 0.0]];
        let w = weights(&[0, 0, 1, 2], 3);
        let m = weighted_pair_mean(&w, |i, j| vals[i][j]);
        assert!((m - (2.0 * 1.0 + 2.0 * 2.0 + 4.0) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn subset_distance_matches_full_when_complete() {
        let t = table(&[&[0.1, 0.5, 0.9], &[0.3, 0.2, 0.8]]);
        assert!((t.distance(0, 1, Some(&[0, 1, 2])) - t.distance(0, 1, None)).abs() < 1e-15);
        assert!((t.distance(0, 1, Some(&[1])) - 0.3f32 as f64).abs() < 1e-6);
    }

    #[test]
    fn band_selection_equalizes_and_reports_empty_sizes() {
        let means = vec![vec![0.76, 0.77, 0.9, 0.78], vec![0.5, 0.79]];
        let (counts, chosen) = band_selection(&["large", "small"], &means, (0.75, 0.80), 1).unwrap();
        assert_eq!(counts, vec![3, 1]);
        assert_eq!(chosen[1], vec![1]);
        assert_eq!(chosen[0].len(), 1);
        assert!([0, 1, 3].contains(&chosen[0][0]));
        let err = band_selection(&["large", "small"], &[vec![0.76], vec![0.2]], (0.75, 0.80), 1).unwrap_err();
        assert!(err.to_string().contains("small"));
    }

    #[test]
    fn neural_effect_is_linear_over_partitions() {
        let up = table(&[&[0.9, 0.5, 0.8, 0.3, 0.6, 0.7], &[0.8, 0.4, 0.7, 0.2, 0.9, 0.1]]);
        let inv = table(&[&[0.1, 0.5, 0.2, 0.6, 0.3, 0.4], &[0.3, 0.2, 0.4, 0.1, 0.5, 0.2]]);
        let (_, _, e) = neural_effects(&up, &inv);
        let full = crate::stats::mean(&e);
        let parts = [&e[0..2], &e[2..4], &e[4..6]];
        let by_parts = parts.iter().map(|p| crate::stats::mean(p)).sum::<f64>() / 3.0;
        assert!((full - by_parts).abs() < 1e-15);
    }
}
