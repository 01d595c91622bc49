//! C2 cache file: C2 vectors of many images against one bank.
//!
//! ```text
//! magic       8 bytes "FHMXC2CA"
//! version     u32
//! bank hash   32 bytes
//! n_images    u32
//! n_templates u32
//! image ids   n_images * (u16 length + UTF-8 bytes)
//! values      n_images * n_templates f32, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::s2::C2Vector;

const MAGIC: &[u8; 8] = b"FHMXC2CA";
const VERSION: u32 = 1;

/// C2 vectors keyed by image content hash, for one bank.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct C2Cache {
    pub bank_hash: String,
    pub n_templates: usize,
    order: Vec<String>,
    rows: HashMap<String, Vec<f32>>,
}

impl C2Cache {
    pub fn new(bank_hash: &str, n_templates: usize) -> Self {
        Self { bank_hash: bank_hash.to_string(), n_templates, ..Default::default() }
    }

    pub fn get(&self, image_id: &str) -> Option<C2Vector> {
        self.rows
            .get(image_id)
            .map(|v| C2Vector { values: v.clone(), bank_hash: self.bank_hash.clone() })
    }

    pub fn insert(&mut self, image_id: &str, c2: &C2Vector) -> Result<()> {
        if c2.bank_hash != self.bank_hash || c2.len() != self.n_templates {
            return Err(Error::DimensionMismatch("C2 vector does not belong to this cache's bank".into()));
        }
        if self.rows.insert(image_id.to_string(), c2.values.clone()).is_none() {
            self.order.push(image_id.to_string());
        }
        Ok(())
    }

    pub fn image_ids(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub fn write_c2_cache(path: &Path, cache: &C2Cache) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut hash = [0u8; 32];
    let bytes = hex::decode(&cache.bank_hash).map_err(|e| Error::invalid(format!("bank hash: {e}")))?;
    hash[..bytes.len().min(32)].copy_from_slice(&bytes[..bytes.len().min(32)]);
    out.extend_from_slice(&hash);
    out.extend_from_slice(&(cache.order.len() as u32).to_le_bytes());
    out.extend_from_slice(&(cache.n_templates as u32).to_le_bytes());
    for id in &cache.order {
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for id in &cache.order {
        for v in &cache.rows[id] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_c2_cache(path: &Path) -> Result<C2Cache> {
    let buf = fs::read(path)?;
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if at + n > buf.len() {
            return Err(bad("truncated"));
        }
        at += n;
        Ok(&buf[at - n..at])
    };
    if take(8)? != MAGIC {
        return Err(bad("not a C2 cache"));
    }
    if u32::from_le_bytes(take(4)?.try_into().expect("4")) != VERSION {
        return Err(bad("unsupported cache version"));
    }
    let bank_hash = hex::encode(take(32)?);
    let n_images = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
    let n_templates = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
    let mut ids = Vec::with_capacity(n_images);
    for _ in 0..n_images {
        let len = u16::from_le_bytes(take(2)?.try_into().expect("2")) as usize;
        ids.push(String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("image id is not UTF-8"))?);
    }
    let mut cache = C2Cache::new(&bank_hash, n_templates);
    for id in ids {
        let row = take(4 * n_templates)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
            .collect();
        cache.insert(&id, &C2Vector { values: row, bank_hash: bank_hash.clone() })?;
    }
    if at != buf.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(cache)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let hash = "0f".repeat(32);
        let mut cache = C2Cache::new(&hash, 3);
        cache.insert("img-a", &C2Vector { values: vec![0.5, 1.0, 0.25], bank_hash: hash.clone() }).unwrap();
        cache.insert("img-b", &C2Vector { values: vec![0.1, 0.2, 0.3], bank_hash: hash.clone() }).unwrap();
        assert!(cache.insert("img-c", &C2Vector { values: vec![0.1], bank_hash: hash.clone() }).is_err());
        let p = dir.path().join("c2.cache");
        write_c2_cache(&p, &cache).unwrap();
        let back = read_c2_cache(&p).unwrap();
        assert_eq!(back, cache);
        assert_eq!(back.get("img-b").unwrap().values, vec![0.1, 0.2, 0.3]);
        assert_eq!(back.image_ids(), &["img-a".to_string(), "img-b".to_string()]);
    }
}
