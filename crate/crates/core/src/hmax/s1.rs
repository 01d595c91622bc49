//! S1: locally normalized Gabor correlation.
//!
//! The response at a position is the correlation of the zero-mean,
//! unit-norm filter with the image patch under it, divided by the norm of
//! the mean-subtracted patch. That is a normalized cross-correlation, so it
//! lies in [-1, 1] and is unchanged by any positive affine change of
//! intensity. Patches with (numerically) no variance respond 0.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stimulus::Image;

use super::config::GaborParams;
use super::feature::{FeatureMap, Level};
use super::fft::{good_size, Fft2};
use super::gabor::gabor_kernel;

/// Patches whose centered energy is below this fraction of
/// `n * image variance` are treated as flat.
const FLAT_FRACTION: f64 = 1e-8;

type Spectra = Arc<Vec<Vec<Complex64>>>;

pub(crate) struct S1Engine {
    params: GaborParams,
    /// `[scale][orientation]` row-major kernels.
    kernels: Vec<Vec<Vec<f64>>>,
    ffts: Mutex<HashMap<(usize, usize), Arc<Fft2>>>,
    /// Keyed by (padded rows, padded cols, scale); one packed spectrum per
    /// pair of orientations.
    spectra: Mutex<HashMap<(usize, usize, usize), Spectra>>,
}

pub(crate) fn build_kernels(params: &GaborParams) -> Vec<Vec<Vec<f64>>> {
    params
        .sizes
        .iter()
        .enumerate()
        .map(|(s, &size)| {
            params
                .orientations_deg
                .iter()
                .map(|deg| gabor_kernel(size, params.wavelengths[s], params.sigmas[s], params.aspect_ratio, deg.to_radians()))
                .collect()
        })
        .collect()
}

/// Prefix sums of x and x² with a zero first row and column.
struct Integral {
    cols: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Integral {
    fn new(x: &[f64], rows: usize, cols: usize) -> Self {
        let w = cols + 1;
        let mut sum = vec![0.0; (rows + 1) * w];
        let mut sq = vec![0.0; (rows + 1) * w];
        for r in 0..rows {
            let (mut rs, mut rq) = (0.0, 0.0);
            for c in 0..cols {
                let v = x[r * cols + c];
                rs += v;
                rq += v * v;
                sum[(r + 1) * w + c + 1] = sum[r * w + c + 1] + rs;
                sq[(r + 1) * w + c + 1] = sq[r * w + c + 1] + rq;
            }
        }
        Self { cols: w, sum, sq }
    }

    /// Centered energy Σ(x - mean)² of the `k × k` window at (r, c).
    #[inline]
    fn energy(&self, r: usize, c: usize, k: usize) -> f64 {
        let w = self.cols;
        let at = |t: &[f64], rr: usize, cc: usize| t[rr * w + cc];
        let s = at(&self.sum, r + k, c + k) - at(&self.sum, r, c + k) - at(&self.sum, r + k, c) + at(&self.sum, r, c);
        let q = at(&self.sq, r + k, c + k) - at(&self.sq, r, c + k) - at(&self.sq, r + k, c) + at(&self.sq, r, c);
        (q - s * s / (k * k) as f64).max(0.0)
    }
}

fn centered(img: &Image) -> (Vec<f64>, f64) {
    let mean = img.mean();
    let x: Vec<f64> = img.pixels().iter().map(|p| p - mean).collect();
    let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    (x, var)
}

impl S1Engine {
    pub fn new(params: GaborParams) -> Self {
        let kernels = build_kernels(&params);
        Self { params, kernels, ffts: Mutex::new(HashMap::new()), spectra: Mutex::new(HashMap::new()) }
    }

    fn fft(&self, rows: usize, cols: usize) -> Arc<Fft2> {
        let mut m = self.ffts.lock().expect("fft cache lock");
        m.entry((rows, cols)).or_insert_with(|| Arc::new(Fft2::new(rows, cols))).clone()
    }

    fn spectra(&self, fft: &Fft2, scale: usize) -> Spectra {
        let key = (fft.rows, fft.cols, scale);
        if let Some(s) = self.spectra.lock().expect("spectra cache lock").get(&key) {
            return s.clone();
        }
        let size = self.params.sizes[scale];
        let kernels = &self.kernels[scale];
        let spectrum = |o: usize| {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft.rows * fft.cols];
            for u in 0..size {
                for v in 0..size {
                    buf[u * fft.cols + v].re = kernels[o][u * size + v];
                }
            }
            fft.forward(&mut buf);
            buf
        };
        let mut packed = Vec::new();
        for o in (0..kernels.len()).step_by(2) {
            let a = spectrum(o);
            let b = if o + 1 < kernels.len() { Some(spectrum(o + 1)) } else { None };
            // conj(A) + i·conj(B): the real and imaginary parts of the
            // inverse transform are then the two correlations.
            let p: Vec<Complex64> = match b {
                Some(b) => a.iter().zip(&b).map(|(x, y)| x.conj() + Complex64::i() * y.conj()).collect(),
                None => a.iter().map(|x| x.conj()).collect(),
            };
            packed.push(p);
        }
        let packed = Arc::new(packed);
        self.spectra.lock().expect("spectra cache lock").insert(key, packed.clone());
        packed
    }

    /// S1 responses for the given scales; other scales are left `None`.
    pub fn run(&self, img: &Image, scales: &[usize]) -> Result<FeatureMap> {
        let n_ori = self.params.orientation_count();
        let (h, w) = (img.height(), img.width());
        for &s in scales {
            let k = *self
                .params
                .sizes
                .get(s)
                .ok_or_else(|| Error::invalid(format!("S1 scale {s} not in the filter table")))?;
            if h < k || w < k {
                return Err(Error::TooSmall(format!("{h}x{w} image smaller than the {k}x{k} filter")));
            }
        }
        let (x, var) = centered(img);
        let integral = Integral::new(&x, h, w);
        let fft = self.fft(good_size(h), good_size(w));
        let (pr, pc) = (fft.rows, fft.cols);
        let mut spec = vec![Complex64::new(0.0, 0.0); pr * pc];
        for r in 0..h {
            for c in 0..w {
                spec[r * pc + c].re = x[r * w + c];
            }
        }
        fft.forward(&mut spec);
        let norm = 1.0 / (pr * pc) as f64;

        let mut levels: Vec<Option<Level>> = vec![None; self.params.scale_count()];
        let mut buf = vec![Complex64::new(0.0, 0.0); pr * pc];
        for &s in scales {
            if levels[s].is_some() {
                continue;
            }
            let k = self.params.sizes[s];
            let (rows, cols) = (h - k + 1, w - k + 1);
            let flat = FLAT_FRACTION * (k * k) as f64 * var;
            let inv_norm: Vec<f64> = (0..rows * cols)
                .map(|i| {
                    let e = integral.energy(i / cols, i % cols, k);
                    if var > 0.0 && e > flat {
                        1.0 / e.sqrt()
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut level = Level::zeros(rows, cols, n_ori);
            level.extent = k;
            for (pair, packed) in self.spectra(&fft, s).iter().enumerate() {
                for ((b, f), g) in buf.iter_mut().zip(&spec).zip(packed.iter()) {
                    *b = f * g;
                }
                fft.inverse(&mut buf);
                let o = 2 * pair;
                for r in 0..rows {
                    for c in 0..cols {
                        let z = buf[r * pc + c] * norm;
                        let scale = inv_norm[r * cols + c];
                        let i = (r * cols + c) * n_ori + o;
                        level.values[i] = (z.re * scale).clamp(-1.0, 1.0) as f32;
                        if o + 1 < n_ori {
                            level.values[i + 1] = (z.im * scale).clamp(-1.0, 1.0) as f32;
                        }
                    }
                }
            }
            levels[s] = Some(level);
        }
        Ok(FeatureMap { orientations: n_ori, levels })
    }
}

/// Direct spatial-domain S1 for one scale; independent of the FFT path and
/// intended for small images and cross-checks.
pub fn s1_direct(img: &Image, params: &GaborParams, scale: usize) -> Result<Level> {
    let k = params.sizes[scale];
    let (h, w) = (img.height(), img.width());
    if h < k || w < k {
        return Err(Error::TooSmall(format!("{h}x{w} image smaller than the {k}x{k} filter")));
    }
    let kernels = &build_kernels(params)[scale];
    let n_ori = kernels.len();
    let (x, var) = centered(img);
    let (rows, cols) = (h - k + 1, w - k + 1);
    let mut level = Level::zeros(rows, cols, n_ori);
    level.extent = k;
    let flat = FLAT_FRACTION * (k * k) as f64 * var;
    for r in 0..rows {
        for c in 0..cols {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for u in 0..k {
                for v in 0..k {
                    let p = x[(r + u) * w + c + v];
                    sum += p;
                    sq += p * p;
                }
            }
            let energy = sq - sum * sum / (k * k) as f64;
            if !(var > 0.0 && energy > flat) {
                continue;
            }
            for (o, ker) in kernels.iter().enumerate() {
                let mut dot = 0.0;
                for u in 0..k {
                    for v in 0..k {
                        dot += ker[u * k + v] * x[(r + u) * w + c + v];
                    }
                }
                level.values[(r * cols + c) * n_ori + o] = (dot / energy.sqrt()).clamp(-1.0, 1.0) as f32;
            }
        }
    }
    Ok(level)
}
