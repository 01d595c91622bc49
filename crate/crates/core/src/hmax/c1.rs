//! C1: per-orientation max of |S1| over a spatial window and over the S1
//! scales of each band, subsampled by the band stride.

use crate::error::{Error, Result};
use crate::stimulus::OvalMask;

use super::config::{Band, C1Band, C1Params, GaborParams};
use super::feature::{FeatureMap, Level};

/// Pools one band. Every scale the band lists must be present in `s1map`.
pub(crate) fn pool_band(s1map: &FeatureMap, gabor: &GaborParams, band: &C1Band) -> Result<Level> {
    let n_ori = s1map.orientations;
    let kmax = band.scales.iter().map(|&s| gabor.sizes[s]).max().expect("band has scales");
    let mut maps = Vec::with_capacity(band.scales.len());
    for &s in &band.scales {
        let level = s1map
            .level(s)
            .ok_or_else(|| Error::invalid(format!("S1 scale {s} missing for C1 pooling")))?;
        let k = gabor.sizes[s];
        if level.extent != k {
            return Err(Error::DimensionMismatch(format!("S1 scale {s} has extent {} but the table says {k}", level.extent)));
        }
        maps.push((level, (kmax - k) / 2));
    }
    // all scales are aligned on the centers of the coarsest filter's map
    let (vr, vc) = {
        let (l, off) = maps.iter().find(|(l, _)| l.extent == kmax).expect("coarsest scale present");
        (l.rows - 2 * off, l.cols - 2 * off)
    };
    let rows = if vr >= band.window { (vr - band.window) / band.stride + 1 } else { 0 };
    let cols = if vc >= band.window { (vc - band.window) / band.stride + 1 } else { 0 };

    // max over scales, then separable max over the window
    let mut across = vec![0f32; vr * vc * n_ori];
    for (level, off) in &maps {
        for r in 0..vr {
            for c in 0..vc {
                let src = level.pixel(r + off, c + off);
                let dst = &mut across[(r * vc + c) * n_ori..(r * vc + c + 1) * n_ori];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = d.max(s.abs());
                }
            }
        }
    }
    let mut horiz = vec![0f32; vr * cols * n_ori];
    for r in 0..vr {
        for j in 0..cols {
            let dst = &mut horiz[(r * cols + j) * n_ori..(r * cols + j + 1) * n_ori];
            for c in j * band.stride..j * band.stride + band.window {
                let src = &across[(r * vc + c) * n_ori..(r * vc + c + 1) * n_ori];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = d.max(*s);
                }
            }
        }
    }
    let mut out = Level::zeros(rows, cols, n_ori);
    for i in 0..rows {
        for j in 0..cols {
            let dst = &mut out.values[(i * cols + j) * n_ori..(i * cols + j + 1) * n_ori];
            for r in i * band.stride..i * band.stride + band.window {
                let src = &horiz[(r * cols + j) * n_ori..(r * cols + j + 1) * n_ori];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = d.max(*s);
                }
            }
        }
    }
    out.stride = band.stride;
    out.extent = band.window + kmax - 1;
    Ok(out)
}

/// C1 for every band whose S1 scales are present in `s1map`; bands with a
/// missing scale are left `None`. Errors if no band can be computed or the
/// map does not match the filter table.
pub fn c1(s1map: &FeatureMap, gabor: &GaborParams, params: &C1Params) -> Result<FeatureMap> {
    if s1map.levels.len() != gabor.scale_count() || s1map.orientations != gabor.orientation_count() {
        return Err(Error::DimensionMismatch(format!(
            "S1 map has {} scales x {} orientations, table has {} x {}",
            s1map.levels.len(),
            s1map.orientations,
            gabor.scale_count(),
            gabor.orientation_count()
        )));
    }
    let mut levels = Vec::with_capacity(params.bands.len());
    for band in &params.bands {
        if band.scales.iter().all(|&s| s1map.level(s).is_some()) {
            levels.push(Some(pool_band(s1map, gabor, band)?));
        } else {
            levels.push(None);
        }
    }
    if levels.iter().all(Option::is_none) {
        return Err(Error::invalid("S1 map covers no complete C1 band"));
    }
    Ok(FeatureMap { orientations: s1map.orientations, levels })
}

/// Size of the oval's bounding box in C1 grid steps of `band`:
/// (width, height), rounded to the nearest unit.
pub fn face_oval_extent(c1map: &FeatureMap, oval: &OvalMask, band: Band) -> Result<(usize, usize)> {
    let level = c1map
        .level(band.index())
        .ok_or_else(|| Error::invalid(format!("C1 band {band} not computed")))?;
    let step = level.stride as f64;
    Ok(((2.0 * oval.semi_cols / step).round() as usize, (2.0 * oval.semi_rows / step).round() as usize))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmax::s1::s1_direct;
    use crate::hmax::{Model, ModelConfig};
    use crate::stimulus::{Image, StimulusParams};
    use proptest::prelude::*;
    use rand::Rng;

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        let mut g = crate::rng::stream(seed);
        Image::from_fn(h, w, |_, _| g.random_range(0.0..1.0)).unwrap()
    }

    fn small_table() -> (GaborParams, C1Params) {
        let sizes = vec![7, 9, 11, 13];
        let sigmas: Vec<f64> = sizes.iter().map(|&s| 0.3 * s as f64 + 0.5).collect();
        let gabor = GaborParams {
            orientations_deg: vec![0.0, 45.0, 90.0, 135.0],
            wavelengths: sigmas.iter().map(|s| s / 0.8).collect(),
            sigmas,
            sizes,
            aspect_ratio: 0.3,
        };
        let bands = vec![
            C1Band { scales: vec![0, 1], window: 4, stride: 2 },
            C1Band { scales: vec![2, 3], window: 5, stride: 3 },
        ];
        (gabor, C1Params { bands })
    }

    fn s1_all(img: &Image, gabor: &GaborParams) -> FeatureMap {
        FeatureMap {
            orientations: gabor.orientation_count(),
            levels: (0..gabor.scale_count()).map(|s| Some(s1_direct(img, gabor, s).unwrap())).collect(),
        }
    }

    /// Max over the window and scales, with each scale offset onto the
    /// coarsest filter's centers.
    fn brute(s1: &FeatureMap, gabor: &GaborParams, band: &C1Band, i: usize, j: usize, o: usize) -> f32 {
        let kmax = band.scales.iter().map(|&s| gabor.sizes[s]).max().unwrap();
        let mut m = 0f32;
        for &s in &band.scales {
            let off = (kmax - gabor.sizes[s]) / 2;
            let l = s1.level(s).unwrap();
            for r in i * band.stride..i * band.stride + band.window {
                for c in j * band.stride..j * band.stride + band.window {
                    m = m.max(l.get(r + off, c + off, o).abs());
                }
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn pooling_matches_brute_force(seed in 0u64..10_000) {
            let (gabor, params) = small_table();
            let s1 = s1_all(&noise(32, 32, seed), &gabor);
            let out = c1(&s1, &gabor, &params).unwrap();
            for (b, band) in params.bands.iter().enumerate() {
                let l = out.level(b).unwrap();
                prop_assert!(l.rows > 0 && l.cols > 0);
                for i in 0..l.rows {
                    for j in 0..l.cols {
                        for o in 0..4 {
                            prop_assert_eq!(l.get(i, j, o), brute(&s1, &gabor, band, i, j, o));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn missing_scale_leaves_band_empty() {
        let (gabor, params) = small_table();
        let mut s1 = s1_all(&noise(32, 32, 1), &gabor);
        s1.levels[3] = None;
        let out = c1(&s1, &gabor, &params).unwrap();
        assert!(out.level(0).is_some() && out.level(1).is_none());
        s1.levels[0] = None;
        assert!(c1(&s1, &gabor, &params).is_err());
    }

    #[test]
    fn default_geometry_on_preprocessed_faces() {
        let stim = StimulusParams::default();
        let model = Model::new(ModelConfig::default()).unwrap();
        let face = stim.preprocess(&noise(308, 300, 2)).unwrap();
        let map = model.c1_bands(&face, &[Band(7)]).unwrap();
        let l = map.level(6).unwrap();
        assert_eq!((l.rows, l.cols, l.stride), (18, 18, 10));
        let oval = stim.oval_for(face.height(), face.width());
        let (w, h) = face_oval_extent(&map, &oval, Band(7)).unwrap();
        assert!(w.abs_diff(17) <= 1 && h.abs_diff(22) <= 1, "{w}x{h}");
    }
}
