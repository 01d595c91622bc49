use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{bootstrap, bootstrap_replicates, BootstrapResult, Direction};
use crate::stimulus::{apply_attention_wpe, invert, make_whole_part, Image, Region};

use super::extract::{C2Store, Setup, TestFace};
use super::report::{ExperimentReport, TrialRow};
use super::{
    boot_row, c2_distance, index_mean, require_faces, size_pair_label, PKind, INVERTED, UPRIGHT,
    UPRIGHT_MINUS_INVERTED,
};

/// One eye region shared by every stimulus: the union of the faces'
/// regions.
pub fn wpe_eye_region(faces: &[TestFace]) -> Result<Region> {
    let mut out: Option<Region> = None;
    for f in faces {
        let r = f
            .eye_region
            .ok_or_else(|| Error::invalid(format!("face {} has no eye region", f.id)))?;
        out = Some(match out {
            None => r,
            Some(u) => u.union(&r),
        });
    }
    out.ok_or_else(|| Error::invalid("no faces given"))
}

/// Per size: per-base effects for upright, inverted and upright minus
/// inverted, and their means.
type SizeEffects<'a> = (&'a str, [Vec<f64>; 3], [f64; 3]);

/// 2AFC score: 1 when the correct choice is strictly closer, 0.5 on a tie.
fn score(d_correct: f64, d_foil: f64) -> f64 {
    if d_correct < d_foil {
        1.0
    } else if d_correct == d_foil {
        0.5
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize)]
struct Cell {
    size: String,
    orientation: String,
    whole: BootstrapResult,
    part: BootstrapResult,
    effect: BootstrapResult,
}

#[derive(Debug, Clone, Serialize)]
struct Comparison {
    sizes: String,
    orientation: String,
    result: BootstrapResult,
}

#[derive(Debug, Clone, Serialize)]
struct Details {
    eye_region: Region,
    trials_per_condition: usize,
    bootstrap_runs: usize,
    cells: Vec<Cell>,
    inverted_subtracted: Vec<(String, BootstrapResult)>,
    comparisons: Vec<Comparison>,
}

/// Whole-part effect.
///
/// For every ordered triple of distinct faces (a, b, base) the study image
/// is whole(a, base). The Whole choices are whole(a, base) and
/// whole(b, base); the Part choices are their cropped eye regions. Every
/// stimulus gets eye-region attention, inverted stimuli are flipped last,
/// and the choice with the smaller C2 distance to the study is picked. Accuracy is averaged per base face and bootstrapped over
/// bases.
pub fn run_wpe(setup: &Setup, faces: &[TestFace], store: &mut C2Store) -> Result<ExperimentReport> {
    let cfg = setup.config;
    let stim = setup.stimulus;
    cfg.validate()?;
    stim.validate()?;
    let n = cfg.wpe_faces;
    require_faces(faces, n, "the whole-part experiment")?;
    let faces = &faces[..n];
    let banks = setup.banks_in_order()?;
    let region = wpe_eye_region(faces)?;
    let bg = stim.background();

    // (eyes, base) with eyes != base, row-major
    let combos: Vec<(usize, usize)> = (0..n).flat_map(|b| (0..n).filter(move |&a| a != b).map(move |a| (a, b))).collect();
    let slot = |a: usize, b: usize| b * (n - 1) + if a > b { a - 1 } else { a };
    let m = combos.len();
    // image index: (orientation * 2 + kind) * m + slot, kind 0 whole, 1 part;
    // the study image is the whole
    let specs: Vec<(bool, usize, usize)> =
        [false, true].iter().flat_map(|&inv| (0..2).flat_map(move |k| (0..m).map(move |s| (inv, k, s)))).collect();
    let images: Vec<Image> = crate::par::try_map(&specs, |&(inv, kind, s)| {
        let (a, b) = combos[s];
        let (whole, part) = make_whole_part(&faces[a].image, &faces[b].image, &region, stim.feather_px, bg)?;
        let img = apply_attention_wpe(if kind == 0 { &whole } else { &part }, &region, stim.wpe_attenuation, bg)?;
        Ok::<_, Error>(if inv { invert(&img) } else { img })
    })?;
    let c2s = store.extract(setup.model, &banks, &images)?;
    let at = |o: usize, kind: usize, a: usize, b: usize| (o * 2 + kind) * m + slot(a, b);

    let triples = n * (n - 1) * (n - 2);
    let runs = cfg.wpe_bootstrap_runs;
    let seed = rng::derive_str(cfg.seed, "wpe/bootstrap");
    let samples: Vec<usize> = (0..n).collect();
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let mut details = Details {
        eye_region: region,
        trials_per_condition: triples,
        bootstrap_runs: runs,
        cells: vec![],
        inverted_subtracted: vec![],
        comparisons: vec![],
    };
    let mut base_effects: Vec<SizeEffects> = Vec::new();
    for (bank, c2) in banks.iter().zip(&c2s) {
        let size = bank.size_class().name();
        let mut per_orientation: Vec<Vec<f64>> = Vec::new();
        for (o, orientation) in [UPRIGHT, INVERTED].into_iter().enumerate() {
            let mut acc = [vec![0.0; n], vec![0.0; n]];
            for (k, condition) in [(0, "whole"), (1, "part")] {
                let mut id = 0;
                for base in 0..n {
                    for a in (0..n).filter(|&a| a != base) {
                        let study = &c2[at(o, 0, a, base)];
                        let d_correct = c2_distance(study, &c2[at(o, k, a, base)]);
                        for b in (0..n).filter(|&b| b != base && b != a) {
                            let d_foil = c2_distance(study, &c2[at(o, k, b, base)]);
                            let sc = score(d_correct, d_foil);
                            acc[k][base] += sc;
                            trials.push(TrialRow {
                                experiment: "wpe".into(),
                                size: size.into(),
                                orientation: orientation.into(),
                                condition: condition.into(),
                                trial_id: id,
                                stimuli: format!("{}|{}|{}", faces[a].id, faces[b].id, faces[base].id),
                                value_a: d_correct,
                                value_b: d_foil,
                                judgment: sc,
                            });
                            id += 1;
                        }
                    }
                }
            }
            let per_base = ((n - 1) * (n - 2)) as f64;
            let (whole, part): (Vec<f64>, Vec<f64>) =
                (acc[0].iter().map(|v| v / per_base).collect(), acc[1].iter().map(|v| v / per_base).collect());
            let effect: Vec<f64> = whole.iter().zip(&part).map(|(w, p)| w - p).collect();
            let bw = bootstrap(&samples, index_mean(&whole), runs, seed, Direction::Greater)?;
            let bp = bootstrap(&samples, index_mean(&part), runs, seed, Direction::Greater)?;
            let be = bootstrap(&samples, index_mean(&effect), runs, seed, Direction::Greater)?;
            rows.push(boot_row("wpe", size, orientation, "whole", &bw, n, PKind::None));
            rows.push(boot_row("wpe", size, orientation, "part", &bp, n, PKind::None));
            rows.push(boot_row("wpe", size, orientation, "effect", &be, n, PKind::OneSided));
            details.cells.push(Cell { size: size.into(), orientation: orientation.into(), whole: bw, part: bp, effect: be });
            per_orientation.push(effect);
        }
        let controlled: Vec<f64> = per_orientation[0].iter().zip(&per_orientation[1]).map(|(u, i)| u - i).collect();
        let bc = bootstrap(&samples, index_mean(&controlled), runs, seed, Direction::Greater)?;
        rows.push(boot_row("wpe", size, UPRIGHT_MINUS_INVERTED, "effect", &bc, n, PKind::OneSided));
        details.inverted_subtracted.push((size.into(), bc));
        let est = [
            crate::stats::mean(&per_orientation[0]),
            crate::stats::mean(&per_orientation[1]),
            crate::stats::mean(&controlled),
        ];
        base_effects.push((size, [per_orientation[0].clone(), per_orientation[1].clone(), controlled], est));
    }
    for a in 0..base_effects.len() {
        for b in a + 1..base_effects.len() {
            for (v, orientation) in [(0, UPRIGHT), (2, UPRIGHT_MINUS_INVERTED)] {
                let (ea, eb) = (&base_effects[a].1[v], &base_effects[b].1[v]);
                let reps = bootstrap_replicates(
                    &samples,
                    |s: &[usize], _: &mut rng::Rng| s.iter().map(|&i| ea[i] - eb[i]).sum::<f64>() / s.len() as f64,
                    runs,
                    seed,
                )?;
                let est = base_effects[a].2[v] - base_effects[b].2[v];
                let res = BootstrapResult::from_replicates(est, &reps, Direction::Greater, seed)?;
                let label = size_pair_label(base_effects[a].0, base_effects[b].0);
                rows.push(boot_row("wpe", &label, orientation, "effect_diff", &res, n, PKind::TwoSided));
                details.comparisons.push(Comparison { sizes: label, orientation: orientation.into(), result: res });
            }
        }
    }
    Ok(ExperimentReport {
        experiment: "wpe".into(),
        seed: cfg.seed,
        rng: rng::RNG_ALGORITHM.into(),
        config_hash: setup.config_hash(),
        model_config_hash: setup.model.config().hash(),
        bank_hashes: setup.bank_hashes(),
        rows,
        declared_trials: banks.len() * 2 * 2 * triples,
        trials,
        details: serde_json::to_value(details)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_score_half() {
        assert_eq!(score(0.3, 0.3), 0.5);
        assert_eq!(score(0.2, 0.3), 1.0);
        assert_eq!(score(0.4, 0.3), 0.0);
    }

    #[test]
    fn eye_region_is_union() {
        let face = |r: Option<Region>| TestFace { id: "f".into(), image: Image::filled(4, 4, 0.5), eye_region: r };
        let a = Region::new(1, 1, 3, 3).unwrap();
        let b = Region::new(2, 0, 4, 2).unwrap();
        let u = wpe_eye_region(&[face(Some(a)), face(Some(b))]).unwrap();
        assert_eq!(u, Region::new(1, 0, 4, 3).unwrap());
        assert!(wpe_eye_region(&[face(Some(a)), face(None)]).is_err());
    }
}
