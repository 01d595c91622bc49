//! PGM/PNG input and PGM output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::Image;

/// An image together with the file it came from.
#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub path: PathBuf,
    pub image: Image,
}

fn is_supported(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        .unwrap_or(false)
}

/// Lists supported image files in lexicographic filename order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_supported(p))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Reads one PGM or PNG file as grayscale intensities in [0, 1].
pub fn read_image(path: &Path) -> Result<Image> {
    let err = |reason: String| Error::ImageRead { path: path.to_path_buf(), reason };
    let decoded = image::ImageReader::open(path)
        .map_err(|e| err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| err(e.to_string()))?
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let gray = decoded.to_luma32f();
    let (w, h) = gray.dimensions();
    Image::new(h as usize, w as usize, gray.into_raw().into_iter().map(f64::from).collect())
        .map_err(|e| err(e.to_string()))
}

/// Loads every PGM/PNG file in `dir`, ordered by filename. Any unreadable
/// file fails the whole call with an error that names each bad file and
/// lists the ones that did load.
pub fn load_images(dir: &Path) -> Result<Vec<NamedImage>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    let mut loaded = Vec::with_capacity(files.len());
    let mut failed = Vec::new();
    for path in files {
        match read_image(&path) {
            Ok(image) => {
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                loaded.push(NamedImage { name, path, image });
            }
            Err(e) => failed.push((path, e.to_string())),
        }
    }
    if failed.is_empty() {
        Ok(loaded)
    } else {
        Err(Error::ImageLoad { failed, loadable: loaded.into_iter().map(|n| n.path).collect() })
    }
}

/// Writes a binary (P5) 16-bit PGM, mapping [0, 1] to [0, 65535] with
/// clamping.
pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{} {}\n65535\n", img.width(), img.height())?;
    let mut buf = Vec::with_capacity(img.pixels().len() * 2);
    for &p in img.pixels() {
        let v = (p.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// File name for a derived stimulus: `<base>__<transform-chain>.pgm`.
pub fn derived_name(base: &str, chain: &[&str]) -> String {
    format!("{base}__{}.pgm", chain.join("-"))
}
