use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hmax::{c2, C2Cache, C2Vector, Model, SizeClass, TemplateBank};
use crate::stimulus::{Image, Region, StimulusParams};

use super::config::ExperimentConfig;

/// A preprocessed test face.
#[derive(Debug, Clone)]
pub struct TestFace {
    pub id: String,
    pub image: Image,
    /// Eye region in preprocessed coordinates (needed by the whole-part
    /// experiment only).
    pub eye_region: Option<Region>,
}

impl TestFace {
    /// Preprocesses a raw face; `raw_region` is mapped through the resize.
    pub fn prepare(id: &str, raw: &Image, raw_region: Option<Region>, stimulus: &StimulusParams) -> Result<Self> {
        let image = stimulus.preprocess(raw)?;
        let eye_region = raw_region.map(|r| r.scaled(stimulus.scale, image.height(), image.width()));
        Ok(Self { id: id.to_string(), image, eye_region })
    }
}

/// Everything a runner needs besides the faces.
#[derive(Clone, Copy)]
pub struct Setup<'a> {
    pub model: &'a Model,
    pub banks: &'a [TemplateBank],
    pub stimulus: &'a StimulusParams,
    pub config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct HashInput<'a> {
    model: &'a crate::hmax::ModelConfig,
    stimulus: &'a StimulusParams,
    experiment: &'a ExperimentConfig,
    banks: Vec<&'a str>,
}

impl<'a> Setup<'a> {
    /// Banks for the configured sizes, in configured order.
    pub fn banks_in_order(&self) -> Result<Vec<&'a TemplateBank>> {
        let mut missing = Vec::new();
        let mut out = Vec::new();
        for &size in &self.config.sizes {
            match self.banks.iter().find(|b| b.size_class() == size) {
                Some(b) => out.push(b),
                None => missing.push(size.name()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::invalid(format!("missing template bank(s) for size: {}", missing.join(", "))));
        }
        Ok(out)
    }

    pub fn bank(&self, size: SizeClass) -> Result<&'a TemplateBank> {
        self.banks
            .iter()
            .find(|b| b.size_class() == size)
            .ok_or_else(|| Error::invalid(format!("missing template bank for size {size}")))
    }

    /// Hash over every input that shapes a report besides the faces.
    pub fn config_hash(&self) -> String {
        let input = HashInput {
            model: self.model.config(),
            stimulus: self.stimulus,
            experiment: self.config,
            banks: self.banks.iter().map(|b| b.hash()).collect(),
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&input).expect("plain data serializes")))
    }

    pub fn bank_hashes(&self) -> Vec<(String, String)> {
        self.banks.iter().map(|b| (b.size_class().name().to_string(), b.hash().to_string())).collect()
    }
}

/// C2 vectors memoized per (bank hash, image content hash).
#[derive(Debug, Default)]
pub struct C2Store {
    caches: BTreeMap<String, C2Cache>,
}

impl C2Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_caches(caches: impl IntoIterator<Item = C2Cache>) -> Self {
        Self { caches: caches.into_iter().map(|c| (c.bank_hash.clone(), c)).collect() }
    }

    pub fn caches(&self) -> impl Iterator<Item = &C2Cache> {
        self.caches.values()
    }

    pub fn cache(&self, bank_hash: &str) -> Option<&C2Cache> {
        self.caches.get(bank_hash)
    }

    /// C2 of every image against every bank: `result[bank][image]`. C1 is
    /// computed once per uncached image and shared by all banks.
    pub fn extract(&mut self, model: &Model, banks: &[&TemplateBank], images: &[Image]) -> Result<Vec<Vec<C2Vector>>> {
        for b in banks {
            self.caches.entry(b.hash().to_string()).or_insert_with(|| C2Cache::new(b.hash(), b.len()));
        }
        let ids: Vec<String> = crate::par::map(images, |img| img.content_hash());
        let mut todo: Vec<usize> = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            let cached = banks.iter().all(|b| self.caches[b.hash()].get(id).is_some());
            if !cached && !todo.iter().any(|&j| ids[j] == *id) {
                todo.push(i);
            }
        }
        let pooling = model.config().pooling;
        let fresh: Vec<Vec<C2Vector>> = crate::par::try_map(&todo, |&i| {
            let c1 = model.c1_for_c2(&images[i])?;
            banks.iter().map(|b| c2(&c1, b, pooling)).collect::<Result<Vec<_>>>()
        })?;
        for (&i, vs) in todo.iter().zip(&fresh) {
            for (b, v) in banks.iter().zip(vs) {
                self.caches.get_mut(b.hash()).expect("inserted above").insert(&ids[i], v)?;
            }
        }
        Ok(banks
            .iter()
            .map(|b| {
                let cache = &self.caches[b.hash()];
                ids.iter().map(|id| cache.get(id).expect("extracted above")).collect()
            })
            .collect())
    }
}
