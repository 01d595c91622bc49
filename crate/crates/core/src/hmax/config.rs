use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A C1 scale band, numbered from 1 (finest) to the band count (coarsest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Band(pub usize);

impl Band {
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn from_index(i: usize) -> Self {
        Band(i + 1)
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// S1 filter bank. Scale `i` uses a `sizes[i]`-pixel square Gabor with
/// wavelength `wavelengths[i]` and envelope `sigmas[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaborParams {
    pub orientations_deg: Vec<f64>,
    pub sizes: Vec<usize>,
    pub wavelengths: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub aspect_ratio: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        let sizes: Vec<usize> = (7..=41).step_by(2).collect();
        // 4 decimals, so the table survives a text round trip
        let sigmas: Vec<f64> = sizes
            .iter()
            .map(|&s| {
                let s = s as f64;
                ((0.0036 * s * s + 0.35 * s + 0.18) * 1e4).round() / 1e4
            })
            .collect();
        let wavelengths = sigmas.iter().map(|s| (s / 0.8 * 1e4).round() / 1e4).collect();
        Self { orientations_deg: vec![0.0, 45.0, 90.0, 135.0], sizes, wavelengths, sigmas, aspect_ratio: 0.3 }
    }
}

impl GaborParams {
    pub fn scale_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn orientation_count(&self) -> usize {
        self.orientations_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sizes.len();
        if n == 0 || self.wavelengths.len() != n || self.sigmas.len() != n {
            return Err(Error::invalid("gabor table columns must be non-empty and equally long"));
        }
        if self.orientations_deg.len() < 2 {
            return Err(Error::invalid("need at least two orientations"));
        }
        if self.sizes.iter().any(|s| s % 2 == 0) || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("filter sizes must be odd and strictly increasing"));
        }
        if self.wavelengths.iter().chain(&self.sigmas).any(|&v| !(v > 0.0)) || !(self.aspect_ratio > 0.0) {
            return Err(Error::invalid("wavelengths, envelopes and aspect ratio must be positive"));
        }
        Ok(())
    }
}

/// One C1 band: the S1 scales it pools and its spatial window and stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C1Band {
    pub scales: Vec<usize>,
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C1Params {
    pub bands: Vec<C1Band>,
}

pub const BAND_COUNT: usize = 9;

impl Default for C1Params {
    fn default() -> Self {
        let bands = (0..BAND_COUNT)
            .map(|b| {
                let window = 8 + 2 * b;
                C1Band { scales: vec![2 * b, 2 * b + 1], window, stride: window / 2 }
            })
            .collect();
        Self { bands }
    }
}

impl C1Params {
    pub fn validate(&self, gabor: &GaborParams) -> Result<()> {
        if self.bands.len() != BAND_COUNT {
            return Err(Error::invalid(format!("C1 needs {BAND_COUNT} bands, got {}", self.bands.len())));
        }
        let n = gabor.scale_count();
        let mut covered = vec![false; n];
        for (i, b) in self.bands.iter().enumerate() {
            if b.scales.is_empty() || b.window == 0 || b.stride == 0 {
                return Err(Error::invalid(format!("band {} has no scales or a zero window/stride", i + 1)));
            }
            for &s in &b.scales {
                if s >= n {
                    return Err(Error::invalid(format!("band {} references S1 scale {s} of {n}", i + 1)));
                }
                covered[s] = true;
            }
        }
        if let Some(s) = covered.iter().position(|c| !c) {
            return Err(Error::invalid(format!("S1 scale {s} belongs to no C1 band")));
        }
        Ok(())
    }
}

/// Which C1 bands a template is matched against when computing C2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "radius")]
pub enum Pooling {
    /// Only the template's own band.
    TemplateBand,
    /// The template's band and `radius` bands on either side.
    Neighborhood(usize),
    /// Every band.
    AllBands,
}

impl Pooling {
    pub fn bands(&self, template_band: Band, band_count: usize) -> Vec<Band> {
        let b = template_band.index();
        let range = match *self {
            Pooling::TemplateBand => b..b + 1,
            Pooling::Neighborhood(r) => b.saturating_sub(r)..(b + r + 1).min(band_count),
            Pooling::AllBands => 0..band_count,
        };
        range.map(Band::from_index).collect()
    }
}

/// Full model configuration: the S1/C1 table, S2 tuning width, the band
/// templates live in and the C2 pooling span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gabor: GaborParams,
    pub c1: C1Params,
    /// Gaussian tuning width of S2 units, in C1 units per patch dimension.
    pub sigma: f64,
    pub template_band: Band,
    pub pooling: Pooling,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gabor: GaborParams::default(),
            c1: C1Params::default(),
            sigma: 0.1,
            template_band: Band(7),
            pooling: Pooling::AllBands,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.gabor.validate()?;
        self.c1.validate(&self.gabor)?;
        if !(self.sigma > 0.0) {
            return Err(Error::invalid(format!("S2 sigma must be positive, got {}", self.sigma)));
        }
        if self.template_band.0 == 0 || self.template_band.0 > self.c1.bands.len() {
            return Err(Error::invalid(format!("template band {} out of range", self.template_band)));
        }
        Ok(())
    }

    /// Bands C2 pools over.
    pub fn pooled_bands(&self) -> Vec<Band> {
        self.pooling.bands(self.template_band, self.c1.bands.len())
    }

    /// SHA-256 over the canonical JSON of the S1/C1 table, S2 width, band
    /// and pooling span.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_is_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.gabor.scale_count(), 18);
        assert_eq!(c.c1.bands.len(), 9);
        assert_eq!(c.c1.bands[6].scales, vec![12, 13]);
        assert_eq!(c.gabor.sizes[12], 31);
        assert_eq!(c.c1.bands[6].window, 20);
        assert_eq!(c.c1.bands[6].stride, 10);
        for (l, s) in c.gabor.wavelengths.iter().zip(&c.gabor.sigmas) {
            assert!((s / l - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_catches_bad_tables() {
        let mut g = GaborParams::default();
        g.sizes[3] = 12;
        assert!(g.validate().is_err());
        let mut c = C1Params::default();
        c.bands.pop();
        assert!(c.validate(&GaborParams::default()).is_err());
        let mut c = C1Params::default();
        c.bands[0].scales = vec![1];
        assert!(c.validate(&GaborParams::default()).is_err());
        let cfg = ModelConfig { sigma: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pooling_spans() {
        assert_eq!(Pooling::Neighborhood(1).bands(Band(7), 9), vec![Band(6), Band(7), Band(8)]);
        assert_eq!(Pooling::Neighborhood(1).bands(Band(9), 9), vec![Band(8), Band(9)]);
        assert_eq!(Pooling::TemplateBand.bands(Band(7), 9), vec![Band(7)]);
        assert_eq!(Pooling::AllBands.bands(Band(7), 9).len(), 9);
    }

    #[test]
    fn hash_changes_with_table() {
        let a = ModelConfig::default();
        let b = ModelConfig { sigma: 0.4, ..Default::default() };
        assert_eq!(a.hash(), ModelConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
