//! Run configuration: one TOML file holding every tunable constant.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use facehmax::experiments::ExperimentConfig;
use facehmax::stimulus::StimulusParams;
use facehmax::{ModelConfig, Region};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Master seed; also used as the experiment seed.
    pub seed: u64,
    pub paths: Paths,
    pub faces: Faces,
    pub learn: Learn,
    pub stimulus: StimulusParams,
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out: PathBuf,
    /// Raw face directory; `<out>/faces` when unset.
    pub faces: Option<PathBuf>,
    /// Template bank directory; `<out>/banks` when unset.
    pub banks: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Faces {
    /// Synthetic face count and raw canvas (height, width) for `gen-faces`.
    pub count: usize,
    pub canvas: (usize, usize),
    /// Eye region in raw coordinates, used for faces without a manifest
    /// entry.
    pub eye_region: Option<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Learn {
    pub n_templates: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 1,
            paths: Paths::default(),
            faces: Faces::default(),
            learn: Learn::default(),
            stimulus: StimulusParams::default(),
            model: ModelConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self { out: PathBuf::from("out"), faces: None, banks: None }
    }
}

impl Default for Faces {
    fn default() -> Self {
        Self { count: 100, canvas: (308, 300), eye_region: None }
    }
}

impl Default for Learn {
    fn default() -> Self {
        Self { n_templates: 1000 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("config version {} not recognized (expected {CONFIG_VERSION})", self.version);
        }
        self.stimulus.validate()?;
        self.model.validate()?;
        self.experiment.validate()?;
        if self.learn.n_templates == 0 {
            bail!("learn.n_templates must be at least 1");
        }
        if self.faces.count == 0 {
            bail!("faces.count must be at least 1");
        }
        Ok(())
    }

    pub fn faces_dir(&self) -> PathBuf {
        self.paths.faces.clone().unwrap_or_else(|| self.paths.out.join("faces"))
    }

    pub fn banks_dir(&self) -> PathBuf {
        self.paths.banks.clone().unwrap_or_else(|| self.paths.out.join("banks"))
    }

    pub fn c2_dir(&self) -> PathBuf {
        self.paths.out.join("c2")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.paths.out.join("reports")
    }
}
