//! Template-bank container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "FHMXBANK"
//! version      u32
//! size_class   u8       0 small, 1 medium, 2 large
//! reserved     3 bytes
//! band         u32      1-based
//! orientations u32
//! k            u32
//! n_templates  u32
//! sigma        f64
//! config hash  32 bytes SHA-256
//! patches      n_templates * k * k * orientations f32 (row, col, orientation)
//! sources      n_templates * 3 u32 (image, row, col)
//! ```
//!
//! A JSON sidecar (`<file>.json`) mirrors the header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::Band;
use super::template::{SizeClass, Template, TemplateBank, TemplateSource};

pub const BANK_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"FHMXBANK";

/// Human-readable mirror of the binary header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankHeader {
    pub format_version: u32,
    pub size_class: SizeClass,
    pub band: Band,
    pub n_orientations: usize,
    pub k: usize,
    pub n_templates: usize,
    pub sigma: f64,
    pub config_hash: String,
    pub bank_hash: String,
}

impl BankHeader {
    pub fn of(bank: &TemplateBank) -> Self {
        Self {
            format_version: BANK_FORMAT_VERSION,
            size_class: bank.size_class(),
            band: bank.band(),
            n_orientations: bank.orientations(),
            k: bank.k(),
            n_templates: bank.len(),
            sigma: bank.sigma(),
            config_hash: bank.config_hash().to_string(),
            bank_hash: bank.hash().to_string(),
        }
    }
}

pub(crate) fn encode(bank: &TemplateBank) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&BANK_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&[bank.size_class().code(), 0, 0, 0]);
    for v in [bank.band().0, bank.orientations(), bank.k(), bank.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&bank.sigma().to_le_bytes());
    let mut hash = [0u8; 32];
    if let Ok(bytes) = hex::decode(bank.config_hash()) {
        let n = bytes.len().min(32);
        hash[..n].copy_from_slice(&bytes[..n]);
    }
    out.extend_from_slice(&hash);
    for t in bank.templates() {
        for v in &t.patch {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for t in bank.templates() {
        for v in [t.source.image, t.source.row, t.source.col] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the bank and its JSON sidecar.
pub fn write_bank(path: &Path, bank: &TemplateBank) -> Result<()> {
    fs::write(path, encode(bank))?;
    let header = BankHeader::of(bank);
    let sources: Vec<TemplateSource> = bank.templates().iter().map(|t| t.source).collect();
    let json = serde_json::json!({ "header": header, "sources": sources });
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&json)?)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Format { path: self.path.to_path_buf(), reason: "truncated".into() });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_bank(path: &Path) -> Result<TemplateBank> {
    let buf = fs::read(path)?;
    let bad = |reason: &str| Error::Format { path: path.to_path_buf(), reason: reason.to_string() };
    let mut r = Reader { buf: &buf, at: 0, path };
    if r.take(8)? != MAGIC {
        return Err(bad("not a template bank"));
    }
    let version = r.u32()?;
    if version != BANK_FORMAT_VERSION {
        return Err(bad(&format!("unsupported bank version {version}")));
    }
    let size_class = SizeClass::from_code(r.take(4)?[0]).ok_or_else(|| bad("unknown size class"))?;
    let band = Band(r.u32()? as usize);
    let orientations = r.u32()? as usize;
    let k = r.u32()? as usize;
    let n = r.u32()? as usize;
    if k != size_class.k() {
        return Err(bad(&format!("k = {k} does not match size class {size_class}")));
    }
    let sigma = r.f64()?;
    let config_hash = hex::encode(r.take(32)?);
    let d = k * k * orientations;
    let mut patches = Vec::with_capacity(n);
    for _ in 0..n {
        patches.push((0..d).map(|_| r.f32()).collect::<Result<Vec<f32>>>()?);
    }
    let mut templates = Vec::with_capacity(n);
    for (id, patch) in patches.into_iter().enumerate() {
        let source = TemplateSource { image: r.u32()?, row: r.u32()?, col: r.u32()? };
        templates.push(Template { id: id as u32, size_class, band, orientations, patch, source });
    }
    if r.at != buf.len() {
        return Err(bad("trailing bytes"));
    }
    TemplateBank::new(size_class, band, orientations, sigma, config_hash, templates)
}
