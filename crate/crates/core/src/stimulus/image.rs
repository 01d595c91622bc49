use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Grayscale image with real-valued, row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("image dimensions must be positive, got {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {i}")));
        }
        Ok(Self { height, width, pixels })
    }

    /// Constant image. Panics on zero dimensions or a non-finite value.
    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::new(height, width, vec![value; height * width]).expect("valid constant image")
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub(crate) fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.width + col] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width..(row + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pixels.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / self.pixels.len() as f64
    }

    /// Applies `f` to every pixel. The result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.pixels.iter().map(|&p| f(p)).collect())
    }

    /// SHA-256 over the dimensions and the little-endian pixel bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.height as u64).to_le_bytes());
        h.update((self.width as u64).to_le_bytes());
        for p in &self.pixels {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Integer translation; pixels shifted in from outside take `fill`.
    pub fn translate(&self, drow: isize, dcol: isize, fill: f64) -> Self {
        let (h, w) = (self.height as isize, self.width as isize);
        let mut out = vec![fill; self.pixels.len()];
        for r in 0..h {
            let sr = r - drow;
            if sr < 0 || sr >= h {
                continue;
            }
            for c in 0..w {
                let sc = c - dcol;
                if sc < 0 || sc >= w {
                    continue;
                }
                out[(r * w + c) as usize] = self.pixels[(sr * w + sc) as usize];
            }
        }
        Self { height: self.height, width: self.width, pixels: out }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn translate_fills_vacated_pixels() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = img.translate(1, 0, 9.0);
        assert_eq!(t.pixels(), &[9.0, 9.0, 1.0, 2.0]);
        let t = img.translate(0, -1, 0.0);
        assert_eq!(t.pixels(), &[2.0, 0.0, 4.0, 0.0]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = Image::filled(3, 3, 0.5);
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.set(1, 1, 0.6);
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
