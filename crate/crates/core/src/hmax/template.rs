use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::stimulus::Image;

use super::config::Band;
use super::feature::FeatureMap;
use super::model::Model;

/// Tuning size: how many C1 units a template spans on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::Large, SizeClass::Medium, SizeClass::Small];

    /// Side length in C1 units.
    pub fn k(self) -> usize {
        match self {
            SizeClass::Small => 4,
            SizeClass::Medium => 8,
            SizeClass::Large => 12,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            SizeClass::Small => 0,
            SizeClass::Medium => 1,
            SizeClass::Large => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SizeClass::Small),
            1 => Some(SizeClass::Medium),
            2 => Some(SizeClass::Large),
            _ => None,
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(SizeClass::Small),
            "medium" => Ok(SizeClass::Medium),
            "large" => Ok(SizeClass::Large),
            other => Err(Error::invalid(format!("unknown size class {other:?} (small, medium, large)"))),
        }
    }
}

/// Where a template was cut from: training image index and C1 cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemplateSource {
    pub image: u32,
    pub row: u32,
    pub col: u32,
}

/// A stored C1 patch, the preferred stimulus of one S2/C2 unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub id: u32,
    pub size_class: SizeClass,
    pub band: Band,
    pub orientations: usize,
    /// `k × k × orientations`, row, col, orientation order.
    pub patch: Vec<f32>,
    pub source: TemplateSource,
}

impl Template {
    pub fn k(&self) -> usize {
        self.size_class.k()
    }

    pub fn dim(&self) -> usize {
        self.k() * self.k() * self.orientations
    }
}

/// Templates of one size class, learnt at one band, sharing one S2 tuning
/// width.
#[derive(Debug, Clone)]
pub struct TemplateBank {
    size_class: SizeClass,
    band: Band,
    orientations: usize,
    sigma: f64,
    config_hash: String,
    templates: Vec<Template>,
    matrix: Array2<f32>,
    norms: Vec<f64>,
    hash: String,
}

impl PartialEq for TemplateBank {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl TemplateBank {
    pub fn new(
        size_class: SizeClass,
        band: Band,
        orientations: usize,
        sigma: f64,
        config_hash: String,
        templates: Vec<Template>,
    ) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::invalid("template bank is empty"));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let d = size_class.k() * size_class.k() * orientations;
        for t in &templates {
            if t.size_class != size_class || t.band != band || t.orientations != orientations || t.patch.len() != d {
                return Err(Error::DimensionMismatch(format!("template {} does not match the bank layout", t.id)));
            }
            if t.patch.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("template {} has non-finite values", t.id)));
            }
        }
        let mut flat = Vec::with_capacity(templates.len() * d);
        for t in &templates {
            flat.extend_from_slice(&t.patch);
        }
        let matrix = Array2::from_shape_vec((templates.len(), d), flat).expect("shape matches");
        let norms = templates
            .iter()
            .map(|t| t.patch.iter().map(|&v| f64::from(v) * f64::from(v)).sum())
            .collect();
        let mut bank = Self {
            size_class,
            band,
            orientations,
            sigma,
            config_hash,
            templates,
            matrix,
            norms,
            hash: String::new(),
        };
        bank.hash = hex::encode(Sha256::digest(super::bankfile::encode(&bank)));
        Ok(bank)
    }

    pub fn size_class(&self) -> SizeClass {
        self.size_class
    }

    pub fn k(&self) -> usize {
        self.size_class.k()
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn orientations(&self) -> usize {
        self.orientations
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// SHA-256 of the bank's binary encoding.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub(crate) fn matrix(&self) -> &Array2<f32> {
        &self.matrix
    }

    pub(crate) fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// A bank holding the templates at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let templates = indices
            .iter()
            .map(|&i| {
                self.templates
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("template index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.size_class, self.band, self.orientations, self.sigma, self.config_hash.clone(), templates)
    }
}

/// Samples `n` distinct (image, position) pairs uniformly from the band
/// `band` C1 maps and copies the `k × k` patches verbatim.
pub fn learn_templates_from_c1(
    c1maps: &[FeatureMap],
    n: usize,
    size_class: SizeClass,
    band: Band,
    sigma: f64,
    config_hash: &str,
    seed: u64,
) -> Result<TemplateBank> {
    if n == 0 {
        return Err(Error::invalid("template count must be at least 1"));
    }
    if c1maps.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    let k = size_class.k();
    let mut levels = Vec::with_capacity(c1maps.len());
    let mut offsets = Vec::with_capacity(c1maps.len() + 1);
    let mut total = 0usize;
    for (i, m) in c1maps.iter().enumerate() {
        let level = m
            .level(band.index())
            .ok_or_else(|| Error::invalid(format!("training image {i} has no C1 band {band}")))?;
        if level.rows < k || level.cols < k {
            return Err(Error::TooSmall(format!(
                "training image {i}: band {band} C1 grid {}x{} smaller than {k}x{k}",
                level.rows, level.cols
            )));
        }
        offsets.push(total);
        total += (level.rows - k + 1) * (level.cols - k + 1);
        levels.push(level);
    }
    if total < n {
        return Err(Error::invalid(format!("only {total} distinct (image, position) pairs for {n} templates")));
    }
    let mut g = rng::stream(rng::derive_str(seed, &format!("templates/{size_class}/{band}")));
    let picks = index::sample(&mut g, total, n);
    let orientations = c1maps[0].orientations;
    let templates = picks
        .iter()
        .enumerate()
        .map(|(id, flat)| {
            let img = offsets.partition_point(|&o| o <= flat) - 1;
            let level = levels[img];
            let local = flat - offsets[img];
            let span = level.cols - k + 1;
            let (row, col) = (local / span, local % span);
            Template {
                id: id as u32,
                size_class,
                band,
                orientations,
                patch: level.patch(row, col, k),
                source: TemplateSource { image: img as u32, row: row as u32, col: col as u32 },
            }
        })
        .collect();
    TemplateBank::new(size_class, band, orientations, sigma, config_hash.to_string(), templates)
}

/// Computes band `band` C1 for each training image and learns `n`
/// templates of the given size from them.
pub fn learn_templates(
    model: &Model,
    train: &[Image],
    n: usize,
    size_class: SizeClass,
    band: Band,
    seed: u64,
) -> Result<TemplateBank> {
    if train.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    let maps = crate::par::try_map(train, |img| model.c1_bands(img, &[band]))?;
    let cfg = model.config();
    learn_templates_from_c1(&maps, n, size_class, band, cfg.sigma, &cfg.hash(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmax::Level;

    fn maps(n: usize, rows: usize, cols: usize) -> Vec<FeatureMap> {
        (0..n)
            .map(|i| {
                let mut l = Level::zeros(rows, cols, 2);
                for (j, v) in l.values.iter_mut().enumerate() {
                    *v = (i * 1000 + j) as f32;
                }
                let mut levels = vec![None; 9];
                levels[6] = Some(l);
                FeatureMap { orientations: 2, levels }
            })
            .collect()
    }

    #[test]
    fn templates_are_verbatim_distinct_patches() {
        let m = maps(3, 6, 7);
        let bank = learn_templates_from_c1(&m, 36, SizeClass::Small, Band(7), 0.1, "cfg", 1).unwrap();
        let mut seen = std::collections::HashSet::new();
        for t in bank.templates() {
            let s = t.source;
            assert!(seen.insert((s.image, s.row, s.col)));
            let level = m[s.image as usize].level(6).unwrap();
            assert_eq!(t.patch, level.patch(s.row as usize, s.col as usize, 4));
        }
        // 3 images x 3 x 4 positions
        assert!(learn_templates_from_c1(&m, 37, SizeClass::Small, Band(7), 0.1, "cfg", 1).is_err());
    }

    #[test]
    fn learning_is_seeded() {
        let m = maps(2, 14, 14);
        let a = learn_templates_from_c1(&m, 10, SizeClass::Large, Band(7), 0.1, "cfg", 1).unwrap();
        let b = learn_templates_from_c1(&m, 10, SizeClass::Large, Band(7), 0.1, "cfg", 1).unwrap();
        let c = learn_templates_from_c1(&m, 10, SizeClass::Large, Band(7), 0.1, "cfg", 2).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_grids_smaller_than_template() {
        let m = maps(1, 10, 20);
        assert!(matches!(
            learn_templates_from_c1(&m, 1, SizeClass::Large, Band(7), 0.1, "cfg", 1),
            Err(Error::TooSmall(_))
        ));
        assert!(learn_templates_from_c1(&m, 1, SizeClass::Small, Band(3), 0.1, "cfg", 1).is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let m = maps(2, 9, 10);
        let bank = learn_templates_from_c1(&m, 10, SizeClass::Medium, Band(7), 0.1, "cfg", 1).unwrap();
        let sub = bank.subset(&[4, 1]).unwrap();
        assert_eq!(sub.templates()[0].patch, bank.templates()[4].patch);
        assert_eq!(sub.len(), 2);
        assert!(bank.subset(&[10]).is_err());
        assert_eq!("LARGE".parse::<SizeClass>().unwrap(), SizeClass::Large);
    }
}
