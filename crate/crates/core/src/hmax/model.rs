use crate::error::Result;
use crate::stimulus::Image;

use super::c1::{c1, pool_band};
use super::config::{Band, ModelConfig};
use super::feature::FeatureMap;
use super::s1::S1Engine;

/// A configured hierarchy. Filter spectra are cached per padded image size,
/// so one `Model` should be shared across images.
pub struct Model {
    config: ModelConfig,
    engine: S1Engine,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let engine = S1Engine::new(config.gabor.clone());
        Ok(Self { config, engine })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// S1 at every scale.
    pub fn s1(&self, img: &Image) -> Result<FeatureMap> {
        let all: Vec<usize> = (0..self.config.gabor.scale_count()).collect();
        self.engine.run(img, &all)
    }

    /// C1 at every band.
    pub fn c1(&self, img: &Image) -> Result<FeatureMap> {
        c1(&self.s1(img)?, &self.config.gabor, &self.config.c1)
    }

    /// C1 for the listed bands only, computing just the S1 scales they
    /// need.
    pub fn c1_bands(&self, img: &Image, bands: &[Band]) -> Result<FeatureMap> {
        let mut scales: Vec<usize> = bands
            .iter()
            .flat_map(|b| self.config.c1.bands[b.index()].scales.iter().copied())
            .collect();
        scales.sort_unstable();
        scales.dedup();
        let s1 = self.engine.run(img, &scales)?;
        let mut levels = vec![None; self.config.c1.bands.len()];
        for b in bands {
            levels[b.index()] = Some(pool_band(&s1, &self.config.gabor, &self.config.c1.bands[b.index()])?);
        }
        Ok(FeatureMap { orientations: s1.orientations, levels })
    }

    /// C1 for the bands C2 pools over.
    pub fn c1_for_c2(&self, img: &Image) -> Result<FeatureMap> {
        self.c1_bands(img, &self.config.pooled_bands())
    }
}
