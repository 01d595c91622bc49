//! S2 Gaussian template matching and C2 max pooling.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::config::Pooling;
use super::feature::{FeatureMap, Level};
use super::template::{Template, TemplateBank};

/// S2 responses of one template over every valid position of its band.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl ResponseMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[inline]
fn tuning(sq: f64, sigma: f64, dim: usize) -> f64 {
    (-sq / (2.0 * sigma * sigma * dim as f64)).exp()
}

/// Gaussian tuning of `t` at every position of its band:
/// `exp(-|patch - t|² / (2 σ² d))` with `d` the patch dimension.
pub fn s2_response(c1map: &FeatureMap, t: &Template, sigma: f64) -> Result<ResponseMap> {
    let level = c1map
        .level(t.band.index())
        .ok_or_else(|| Error::DimensionMismatch(format!("C1 map lacks band {}", t.band)))?;
    if level.orientations != t.orientations {
        return Err(Error::DimensionMismatch("orientation count differs from template".into()));
    }
    let k = t.k();
    if level.rows < k || level.cols < k {
        return Err(Error::TooSmall(format!("band {} grid {}x{} below {k}x{k}", t.band, level.rows, level.cols)));
    }
    let (rows, cols) = (level.rows - k + 1, level.cols - k + 1);
    let mut buf = Vec::with_capacity(t.dim());
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            buf.clear();
            level.patch_into(r, c, k, &mut buf);
            values.push(tuning(sq_dist(&buf, &t.patch), sigma, t.dim()));
        }
    }
    Ok(ResponseMap { rows, cols, values })
}

/// Pooled template responses for one image against one bank.
#[derive(Debug, Clone, PartialEq)]
pub struct C2Vector {
    pub values: Vec<f32>,
    pub bank_hash: String,
}

impl C2Vector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }
}

/// Euclidean distance between two C2 vectors from the same bank.
pub fn dissimilarity(a: &C2Vector, b: &C2Vector) -> Result<f64> {
    if a.bank_hash != b.bank_hash || a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "C2 vectors of length {} and {} from different banks or sizes",
            a.len(),
            b.len()
        )));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

struct Positions<'a> {
    refs: Vec<(&'a Level, usize, usize)>,
    matrix: Array2<f32>,
    norms: Vec<f64>,
}

fn gather<'a>(c1map: &'a FeatureMap, bank: &TemplateBank, pooling: Pooling) -> Result<Positions<'a>> {
    let k = bank.k();
    let d = k * k * bank.orientations();
    let mut refs = Vec::new();
    let mut flat = Vec::new();
    for b in pooling.bands(bank.band(), c1map.levels.len()) {
        let level = c1map
            .level(b.index())
            .ok_or_else(|| Error::DimensionMismatch(format!("C1 map lacks pooled band {b}")))?;
        if level.orientations != bank.orientations() {
            return Err(Error::DimensionMismatch("orientation count differs from bank".into()));
        }
        if level.rows < k || level.cols < k {
            continue;
        }
        for r in 0..=level.rows - k {
            for c in 0..=level.cols - k {
                refs.push((level, r, c));
                level.patch_into(r, c, k, &mut flat);
            }
        }
    }
    if refs.is_empty() {
        return Err(Error::TooSmall(format!("no pooled band fits a {k}x{k} template")));
    }
    let norms = flat.chunks_exact(d).map(|p| p.iter().map(|&v| f64::from(v) * f64::from(v)).sum()).collect();
    let matrix = Array2::from_shape_vec((refs.len(), d), flat).expect("shape matches");
    Ok(Positions { refs, matrix, norms })
}

/// For each template, the minimum over every position of the pooled bands
/// of the squared patch distance divided by the patch dimension `d`.
///
/// Squared distances for all (template, position) pairs come from one
/// matrix product; the best candidates per template are then recomputed
/// exactly in f64, so an exact self-match yields 0.
pub fn c2_min_distances(c1map: &FeatureMap, bank: &TemplateBank, pooling: Pooling) -> Result<Vec<f64>> {
    let pos = gather(c1map, bank, pooling)?;
    let k = bank.k();
    let d = k * k * bank.orientations();
    let dots = bank.matrix().dot(&pos.matrix.t());
    let tnorms = bank.norms();
    Ok(crate::par::map_range(bank.len(), |i| {
        let row = dots.row(i);
        let approx: Vec<f64> = row.iter().zip(&pos.norms).map(|(&g, &pn)| tnorms[i] + pn - 2.0 * f64::from(g)).collect();
        let (best, _) = approx
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, &v)| if v < acc.1 { (j, v) } else { acc });
        let tol = 1e-4 * (tnorms[i] + pos.norms[best]) + 1e-6;
        let patch = &bank.templates()[i].patch;
        let mut buf = Vec::with_capacity(d);
        let exact = approx
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= approx[best] + tol)
            .map(|(j, _)| {
                let (level, r, c) = pos.refs[j];
                buf.clear();
                level.patch_into(r, c, k, &mut buf);
                sq_dist(&buf, patch)
            })
            .fold(f64::INFINITY, f64::min);
        exact / d as f64
    }))
}

/// C2 value for a per-dimension squared distance from [`c2_min_distances`].
pub fn c2_from_distance(dist: f64, sigma: f64) -> f32 {
    (tuning(dist, sigma, 1) as f32).max(f32::MIN_POSITIVE)
}

/// The tuning width at which the mean of [`c2_from_distance`] over `dists`
/// equals `target`, found by bisection on log σ.
pub fn calibrate_sigma(dists: &[f64], target: f64) -> Result<f64> {
    if dists.is_empty() || dists.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::invalid("sigma calibration needs finite non-negative distances"));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("target mean C2 must lie in (0, 1), got {target}")));
    }
    if dists.iter().all(|&d| d == 0.0) {
        return Err(Error::Calibration("every distance is 0, so C2 is 1 at any sigma".into()));
    }
    let mean_at = |sigma: f64| dists.iter().map(|&d| tuning(d, sigma, 1)).sum::<f64>() / dists.len() as f64;
    let (mut lo, mut hi) = (1e-6f64.ln(), 1e6f64.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// For each template, the maximum S2 response over every position of the
/// pooled bands.
pub fn c2(c1map: &FeatureMap, bank: &TemplateBank, pooling: Pooling) -> Result<C2Vector> {
    let sigma = bank.sigma();
    let values = c2_min_distances(c1map, bank, pooling)?.into_iter().map(|d| c2_from_distance(d, sigma)).collect();
    Ok(C2Vector { values, bank_hash: bank.hash().to_string() })
}

/// Reference C2 by exhaustive direct evaluation of [`s2_response`] over the
/// pooled bands. Slow; used to cross-check [`c2`].
pub fn c2_direct(c1map: &FeatureMap, bank: &TemplateBank, pooling: Pooling) -> Result<Vec<f64>> {
    let bands = pooling.bands(bank.band(), c1map.levels.len());
    bank.templates()
        .iter()
        .map(|t| {
            let mut best = f64::NEG_INFINITY;
            for b in &bands {
                let mut moved = t.clone();
                moved.band = *b;
                match s2_response(c1map, &moved, bank.sigma()) {
                    Ok(r) => best = best.max(r.max()),
                    Err(Error::TooSmall(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(best)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmax::{learn_templates, Band, Model, ModelConfig, SizeClass};
    use crate::stimulus::Image;
    use proptest::prelude::*;

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut g = crate::rng::stream(seed);
        Image::from_fn(h, w, |_, _| g.random_range(0.0..1.0)).unwrap()
    }

    fn fixture(size: SizeClass, n: usize) -> (Model, Vec<Image>, TemplateBank) {
        let model = Model::new(ModelConfig::default()).unwrap();
        let imgs = vec![noise(150, 140, 1), noise(150, 140, 2)];
        let bank = learn_templates(&model, &imgs, n, size, Band(7), 3).unwrap();
        (model, imgs, bank)
    }

    #[test]
    fn self_match_is_exactly_one() {
        let (model, imgs, bank) = fixture(SizeClass::Small, 20);
        for t in bank.templates() {
            let img = &imgs[t.source.image as usize];
            let v = c2(&model.c1_for_c2(img).unwrap(), &bank, model.config().pooling).unwrap();
            assert_eq!(v.values[t.id as usize], 1.0);
        }
    }

    #[test]
    fn gemm_path_matches_direct_evaluation() {
        let (model, _, bank) = fixture(SizeClass::Medium, 12);
        let c1map = model.c1_for_c2(&noise(150, 140, 9)).unwrap();
        let fast = c2(&c1map, &bank, model.config().pooling).unwrap();
        let slow = c2_direct(&c1map, &bank, model.config().pooling).unwrap();
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((f64::from(*a) - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn s2_tuning_example() {
        // one dimension at distance 1 from a 4x4x4 template of zeros
        assert!((tuning(1.0, 0.5, 64) - (-1.0f64 / 32.0).exp()).abs() < 1e-15);
        assert_eq!(c2_from_distance(0.0, 0.1), 1.0);
        assert!(c2_from_distance(1e6, 0.1) > 0.0);
    }

    #[test]
    fn dissimilarity_rejects_mixed_banks() {
        let a = C2Vector { values: vec![0.5; 3], bank_hash: "a".into() };
        let b = C2Vector { values: vec![0.5; 3], bank_hash: "b".into() };
        assert!(dissimilarity(&a, &b).is_err());
        let c = C2Vector { values: vec![0.5, 0.5, 1.5], bank_hash: "a".into() };
        assert_eq!(dissimilarity(&a, &c).unwrap(), 1.0);
    }

    #[test]
    fn calibration_hits_target() {
        let d = [0.001, 0.02, 0.03, 0.05];
        let s = calibrate_sigma(&d, 0.775).unwrap();
        let m = d.iter().map(|&x| f64::from(c2_from_distance(x, s))).sum::<f64>() / 4.0;
        assert!((m - 0.775).abs() < 1e-6);
        assert!(calibrate_sigma(&[0.0, 0.0], 0.5).is_err());
        assert!(calibrate_sigma(&d, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn c2_values_in_unit_interval(seed in 0u64..1000) {
            let (model, _, bank) = fixture(SizeClass::Small, 8);
            let v = c2(&model.c1_for_c2(&noise(150, 140, seed)).unwrap(), &bank, model.config().pooling).unwrap();
            prop_assert!(v.values.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    proptest! {
        #[test]
        fn calibration_is_monotone_in_target(t1 in 0.05f64..0.95, t2 in 0.05f64..0.95) {
            let d = [0.01, 0.04, 0.2];
            let (a, b) = (calibrate_sigma(&d, t1).unwrap(), calibrate_sigma(&d, t2).unwrap());
            prop_assert!((t1 < t2) <= (a <= b * (1.0 + 1e-9)));
        }
    }
}
