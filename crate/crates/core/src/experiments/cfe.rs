use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hmax::C2Vector;
use crate::rng;
use crate::stats::{bootstrap, wilcoxon_signed_rank, BootstrapResult, Direction, WilcoxonResult};
use crate::stimulus::{apply_attention_cfe, invert, make_composite, Image};

use super::extract::{C2Store, Setup, TestFace};
use super::report::{ExperimentReport, ReportRow, TrialRow};
use super::threshold::calibrate_threshold;
use super::{boot_row, c2_distance, index_mean, require_faces, wilcoxon_row, PKind, INVERTED, UPRIGHT, UPRIGHT_MINUS_INVERTED};

/// Faces of one CFE pair: both "same" composites share `top`; the
/// distractor composite has a different top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfePair {
    pub top: usize,
    pub bottoms: [usize; 2],
    pub distractor_top: usize,
}

/// Draws pair `i`'s two distinct bottoms and a distractor top, all
/// different from face `i`.
pub fn cfe_pairs(n: usize, seed: u64) -> Vec<CfePair> {
    let mut g = rng::stream(rng::derive_str(seed, "cfe/pairs"));
    let skip = |i: usize, x: usize| if x >= i { x + 1 } else { x };
    (0..n)
        .map(|i| {
            let b = sample(&mut g, n - 1, 2);
            let d = g.random_range(0..n - 1);
            CfePair { top: i, bottoms: [skip(i, b.index(0)), skip(i, b.index(1))], distractor_top: skip(i, d) }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct CellResult {
    size: String,
    orientation: String,
    aligned_dissims: Vec<f64>,
    misaligned_dissims: Vec<f64>,
    aligned_hit_rate: BootstrapResult,
    misaligned_hit_rate: BootstrapResult,
    effect: BootstrapResult,
    neuron_effects_mean: f64,
    neuron_wilcoxon: WilcoxonResult,
}

#[derive(Debug, Clone, Serialize)]
struct SizeResult {
    size: String,
    threshold: f64,
    cells: Vec<CellResult>,
    neuron_wilcoxon_minus_inverted: WilcoxonResult,
}

#[derive(Debug, Clone, Serialize)]
struct Details {
    pairs: Vec<CfePair>,
    misalign_px: isize,
    target_hit_rate: f64,
    bootstrap_runs: usize,
    sizes: Vec<SizeResult>,
}

const KINDS: [&str; 4] = ["aligned", "misaligned", "aligned_different", "misaligned_different"];

/// Per-template CFE of one neuron: mean over pairs of
/// `|Δ aligned| - |Δ misaligned|`, where Δ is the response difference
/// between the two same-top composites.
fn neuron_effects(al: &[(C2Vector, C2Vector)], mis: &[(C2Vector, C2Vector)]) -> Vec<f64> {
    let n_t = al[0].0.len();
    let n = al.len() as f64;
    (0..n_t)
        .map(|t| {
            al.iter()
                .zip(mis)
                .map(|((a, b), (c, d))| {
                    let da = (f64::from(a.values[t]) - f64::from(b.values[t])).abs();
                    let dm = (f64::from(c.values[t]) - f64::from(d.values[t])).abs();
                    da - dm
                })
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Composite face effect.
///
/// For each of the first `cfe_faces` faces, two composites share its top
/// half over two different bottoms, in aligned and misaligned layouts, plus
/// one distractor with another top. Attention to the top half is applied,
/// then inversion where requested. Per size, θ is calibrated on the
/// aligned upright same-trial dissimilarities and applied to all cells.
/// Hit rates are bootstrapped over pairs; the neuron inset tests per-template
/// effects with Wilcoxon. Distractor trials are kept in the raw table only.
pub fn run_cfe(setup: &Setup, faces: &[TestFace], store: &mut C2Store) -> Result<ExperimentReport> {
    let cfg = setup.config;
    let stim = setup.stimulus;
    cfg.validate()?;
    stim.validate()?;
    let n = cfg.cfe_faces;
    require_faces(faces, n, "the composite face experiment")?;
    let banks = setup.banks_in_order()?;
    let faces = &faces[..n];
    let bg = stim.background();
    let (h, w) = (faces[0].image.height(), faces[0].image.width());
    let misalign = stim.misalign_for(h, w);
    let pairs = cfe_pairs(n, cfg.seed);

    // stimulus index: ((orientation * 2 + misaligned) * n + pair) * 3 + {A, B, distractor}
    let specs: Vec<(bool, bool, usize, usize)> = [false, true]
        .iter()
        .flat_map(|&inv| {
            let pairs = &pairs;
            [true, false].into_iter().flat_map(move |aligned| {
                pairs.iter().flat_map(move |p| {
                    [(p.top, p.bottoms[0]), (p.top, p.bottoms[1]), (p.distractor_top, p.bottoms[1])]
                        .into_iter()
                        .map(move |(t, b)| (inv, aligned, t, b))
                })
            })
        })
        .collect();
    let images: Vec<Image> = crate::par::try_map(&specs, |&(inv, aligned, t, b)| {
        let c = make_composite(&faces[t].image, &faces[b].image, aligned, stim.gap_px, misalign, bg)?;
        let a = apply_attention_cfe(&c, stim.cfe_attenuation, bg);
        Ok::<_, crate::Error>(if inv { invert(&a) } else { a })
    })?;
    let c2s = store.extract(setup.model, &banks, &images)?;

    let idx = |inv: usize, mis: usize, pair: usize, which: usize| ((inv * 2 + mis) * n + pair) * 3 + which;
    let samples: Vec<usize> = (0..n).collect();
    let id = |t: usize, b: usize| format!("{}+{}", faces[t].id, faces[b].id);
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut trials: Vec<TrialRow> = Vec::new();
    let mut sizes = Vec::new();
    for (bank, c2) in banks.iter().zip(&c2s) {
        let size = bank.size_class().name();
        let dis = |inv: usize, mis: usize, pair: usize, which: usize| {
            c2_distance(&c2[idx(inv, mis, pair, 0)], &c2[idx(inv, mis, pair, which)])
        };
        let aligned_upright: Vec<f64> = (0..n).map(|i| dis(0, 0, i, 1)).collect();
        let theta = calibrate_threshold(&aligned_upright, cfg.target_hit_rate)?;
        let mut cells = Vec::new();
        let mut per_orientation_neurons = Vec::new();
        for (o, orientation) in [UPRIGHT, INVERTED].into_iter().enumerate() {
            for (mis, kind) in [(0, KINDS[0]), (1, KINDS[1])] {
                for (which, k) in [(1, kind), (2, KINDS[2 + mis])] {
                    for (i, p) in pairs.iter().enumerate() {
                        let d = dis(o, mis, i, which);
                        let other = if which == 1 { id(p.top, p.bottoms[1]) } else { id(p.distractor_top, p.bottoms[1]) };
                        trials.push(TrialRow {
                            experiment: "cfe".into(),
                            size: size.into(),
                            orientation: orientation.into(),
                            condition: k.into(),
                            trial_id: i,
                            stimuli: format!("{}|{other}", id(p.top, p.bottoms[0])),
                            value_a: d,
                            value_b: theta,
                            judgment: if d < theta { 1.0 } else { 0.0 },
                        });
                    }
                }
            }
            let al: Vec<f64> = (0..n).map(|i| dis(o, 0, i, 1)).collect();
            let mi: Vec<f64> = (0..n).map(|i| dis(o, 1, i, 1)).collect();
            let hit = |d: &[f64]| -> Vec<f64> { d.iter().map(|&x| if x < theta { 1.0 } else { 0.0 }).collect() };
            let (ha, hm) = (hit(&al), hit(&mi));
            let runs = cfg.cfe_bootstrap_runs;
            let seed = rng::derive_str(cfg.seed, &format!("cfe/bootstrap/{size}/{orientation}"));
            let diff: Vec<f64> = hm.iter().zip(&ha).map(|(m, a)| m - a).collect();
            let b_al = bootstrap(&samples, index_mean(&ha), runs, seed, Direction::Greater)?;
            let b_mis = bootstrap(&samples, index_mean(&hm), runs, seed, Direction::Greater)?;
            let b_eff = bootstrap(&samples, index_mean(&diff), runs, seed, Direction::Greater)?;
            rows.push(boot_row("cfe", size, orientation, "aligned", &b_al, n, PKind::None));
            rows.push(boot_row("cfe", size, orientation, "misaligned", &b_mis, n, PKind::None));
            rows.push(boot_row("cfe", size, orientation, "effect", &b_eff, n, PKind::OneSided));

            let same = |mis: usize| -> Vec<(C2Vector, C2Vector)> {
                (0..n).map(|i| (c2[idx(o, mis, i, 0)].clone(), c2[idx(o, mis, i, 1)].clone())).collect()
            };
            let ne = neuron_effects(&same(0), &same(1));
            let wx = wilcoxon_signed_rank(&ne)?;
            rows.push(wilcoxon_row("cfe", size, orientation, "neuron_effect", &ne, &wx)?);
            cells.push(CellResult {
                size: size.into(),
                orientation: orientation.into(),
                aligned_dissims: al,
                misaligned_dissims: mi,
                aligned_hit_rate: b_al,
                misaligned_hit_rate: b_mis,
                effect: b_eff,
                neuron_effects_mean: crate::stats::mean(&ne),
                neuron_wilcoxon: wx,
            });
            per_orientation_neurons.push(ne);
        }
        let controlled: Vec<f64> =
            per_orientation_neurons[0].iter().zip(&per_orientation_neurons[1]).map(|(u, i)| u - i).collect();
        let wx = wilcoxon_signed_rank(&controlled)?;
        rows.push(wilcoxon_row("cfe", size, UPRIGHT_MINUS_INVERTED, "neuron_effect", &controlled, &wx)?);
        sizes.push(SizeResult { size: size.into(), threshold: theta, cells, neuron_wilcoxon_minus_inverted: wx });
    }
    let details = Details {
        pairs,
        misalign_px: misalign,
        target_hit_rate: cfg.target_hit_rate,
        bootstrap_runs: cfg.cfe_bootstrap_runs,
        sizes,
    };
    Ok(ExperimentReport {
        experiment: "cfe".into(),
        seed: cfg.seed,
        rng: rng::RNG_ALGORITHM.into(),
        config_hash: setup.config_hash(),
        model_config_hash: setup.model.config().hash(),
        bank_hashes: setup.bank_hashes(),
        rows,
        declared_trials: banks.len() * 2 * KINDS.len() * n,
        trials,
        details: serde_json::to_value(details)?,
    })
}
