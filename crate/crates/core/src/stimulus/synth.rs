//! Procedural frontal faces.
//!
//! Each face is drawn on a raw canvas: a head larger than the default crop
//! oval (so cropping removes the outline), a hairline, eyebrows, eyes with
//! irises, nose sides and nostrils, and a mouth. Part positions, sizes and
//! intensities are drawn per face from a stream derived from (seed, index).

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng;

use super::{Image, Region};

/// Smallest canvas side the generator accepts.
pub const MIN_CANVAS: usize = 48;

/// A generated face and the region its eyes and brows were drawn in (in
/// raw canvas coordinates).
#[derive(Debug, Clone)]
pub struct SyntheticFace {
    pub index: usize,
    pub seed: u64,
    pub image: Image,
    pub eye_region: Region,
}

struct Canvas {
    h: usize,
    w: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn blend(&mut self, r: usize, c: usize, v: f64, alpha: f64) {
        if alpha > 0.0 {
            let p = &mut self.px[r * self.w + c];
            *p = *p * (1.0 - alpha) + v * alpha;
        }
    }

    /// Paints a shape given as a signed distance in pixels (negative inside),
    /// anti-aliased over one pixel, within the bounding box.
    fn paint(&mut self, bbox: (f64, f64, f64, f64), v: f64, sdf: impl Fn(f64, f64) -> f64) {
        let (y0, x0, y1, x1) = bbox;
        let r0 = (y0 - 2.0).floor().max(0.0) as usize;
        let c0 = (x0 - 2.0).floor().max(0.0) as usize;
        let r1 = ((y1 + 2.0).ceil().max(0.0) as usize).min(self.h);
        let c1 = ((x1 + 2.0).ceil().max(0.0) as usize).min(self.w);
        for r in r0..r1 {
            for c in c0..c1 {
                let d = sdf(r as f64, c as f64);
                self.blend(r, c, v, (0.5 - d).clamp(0.0, 1.0));
            }
        }
    }

    fn ellipse(&mut self, cy: f64, cx: f64, ry: f64, rx: f64, v: f64) {
        let m = ry.min(rx);
        self.paint((cy - ry, cx - rx, cy + ry, cx + rx), v, |y, x| {
            let q = (((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2)).sqrt();
            (q - 1.0) * m
        });
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64), half_thick: f64, v: f64) {
        let (ay, ax) = a;
        let (by, bx) = b;
        let bbox = (ay.min(by) - half_thick, ax.min(bx) - half_thick, ay.max(by) + half_thick, ax.max(bx) + half_thick);
        let (dy, dx) = (by - ay, bx - ax);
        let len2 = (dy * dy + dx * dx).max(1e-12);
        self.paint(bbox, v, |y, x| {
            let t = (((y - ay) * dy + (x - ax) * dx) / len2).clamp(0.0, 1.0);
            let (py, pxx) = (ay + t * dy, ax + t * dx);
            ((y - py).powi(2) + (x - pxx).powi(2)).sqrt() - half_thick
        });
    }
}

/// Draws `count` faces on an `(height, width)` canvas. Face `i` depends
/// only on `(seed, i)`.
pub fn gen_synthetic_faces(count: usize, seed: u64, canvas: (usize, usize)) -> Result<Vec<SyntheticFace>> {
    if count == 0 {
        return Err(Error::invalid("face count must be at least 1"));
    }
    let (h, w) = canvas;
    if h < MIN_CANVAS || w < MIN_CANVAS {
        return Err(Error::TooSmall(format!("canvas {h}x{w} below {MIN_CANVAS}x{MIN_CANVAS}")));
    }
    Ok(crate::par::map_range(count, |i| draw_face(i, seed, h, w)))
}

fn draw_face(index: usize, seed: u64, h: usize, w: usize) -> SyntheticFace {
    let mut g = rng::stream(rng::derive(rng::derive_str(seed, "synthetic-face"), index as u64));
    let mut u = |lo: f64, hi: f64| g.random_range(lo..hi);

    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    // the default crop oval, in canvas units
    let a = 0.38 * w as f64;
    let b = 0.48 * h as f64;

    let background = u(0.18, 0.35);
    let skin = u(0.55, 0.72);
    let mut cv = Canvas { h, w, px: vec![background; h * w] };
    cv.ellipse(cy, cx, 1.12 * b, 1.10 * a, skin);

    // hair above a curved hairline
    let hair = u(0.06, 0.25);
    let hair_y = cy - b * u(0.56, 0.72);
    let hair_curve = b * u(0.08, 0.30);
    let hair_max_y = hair_y + hair_curve * 2.0;
    cv.paint((0.0, 0.0, hair_max_y, w as f64), hair, |y, x| {
        let t = (x - cx) / a;
        y - (hair_y + hair_curve * t * t)
    });

    let eye_y = cy - b * u(0.10, 0.20);
    let eye_dx = a * u(0.30, 0.42);
    let eye_rx = a * u(0.13, 0.18);
    let eye_ry = b * u(0.035, 0.055);
    let sclera = u(0.80, 0.95);
    let iris_r = eye_ry * u(0.80, 1.0);
    let iris = u(0.04, 0.25);
    let gaze = eye_rx * u(-0.25, 0.25);

    let brow_y = eye_y - b * u(0.08, 0.13);
    let brow_half = eye_rx * u(1.0, 1.3);
    let brow_th = b * u(0.012, 0.025);
    let brow = u(0.08, 0.35);
    let brow_tilt = u(-0.15, 0.15);

    for side in [-1.0, 1.0] {
        let ex = cx + side * eye_dx;
        cv.ellipse(eye_y, ex, eye_ry, eye_rx, sclera);
        cv.ellipse(eye_y, ex + gaze, iris_r, iris_r, iris);
        let dy = brow_half * brow_tilt;
        cv.segment((brow_y + dy, ex - side * brow_half), (brow_y - dy, ex + side * brow_half), brow_th, brow);
    }

    let nose_top = eye_y + b * u(0.0, 0.05);
    let tip_y = cy + b * u(0.10, 0.22);
    let nose_top_w = a * u(0.04, 0.08);
    let nose_tip_w = a * u(0.10, 0.17);
    let nose_shade = skin - u(0.06, 0.16);
    let nose_th = b * u(0.006, 0.012);
    let nostril = u(0.12, 0.35);
    for side in [-1.0, 1.0] {
        cv.segment((nose_top, cx + side * nose_top_w), (tip_y, cx + side * nose_tip_w), nose_th, nose_shade);
        cv.ellipse(tip_y, cx + side * 0.55 * nose_tip_w, b * 0.018, a * 0.05, nostril);
    }

    let mouth_y = tip_y + b * u(0.14, 0.24);
    let mouth_half = a * u(0.22, 0.36);
    let mouth_th = b * u(0.018, 0.035);
    let lips = u(0.22, 0.45);
    let smile = b * u(-0.02, 0.04);
    cv.segment((mouth_y - smile, cx - mouth_half), (mouth_y, cx), mouth_th, lips);
    cv.segment((mouth_y, cx), (mouth_y - smile, cx + mouth_half), mouth_th, lips);

    let margin = 0.03 * b;
    let top = (brow_y - brow_half * brow_tilt.abs() - brow_th - margin).floor().max(0.0) as usize;
    let bottom = ((eye_y + eye_ry + margin).ceil() as usize + 1).min(h);
    let half_w = eye_dx + eye_rx.max(brow_half) + margin;
    let left = (cx - half_w).floor().max(0.0) as usize;
    let right = ((cx + half_w).ceil() as usize + 1).min(w);

    SyntheticFace {
        index,
        seed,
        image: Image::new(h, w, cv.px).expect("finite synthetic pixels"),
        eye_region: Region { top, left, bottom, right },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::StimulusParams;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_synthetic_faces(4, 3, (120, 110)).unwrap();
        let b = gen_synthetic_faces(4, 3, (120, 110)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.eye_region, y.eye_region);
        }
        let c = gen_synthetic_faces(1, 4, (120, 110)).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn hundred_faces_are_pairwise_distinct() {
        let faces = gen_synthetic_faces(100, 7, (80, 76)).unwrap();
        let hashes: std::collections::HashSet<String> = faces.iter().map(|f| f.image.content_hash()).collect();
        assert_eq!(hashes.len(), 100);
        for i in 0..faces.len() {
            for j in (i + 1)..faces.len() {
                assert_ne!(faces[i].image.pixels(), faces[j].image.pixels());
            }
        }
    }

    #[test]
    fn faces_have_in_oval_variance() {
        let p = StimulusParams { scale: 1.0, ..Default::default() };
        for f in gen_synthetic_faces(10, 1, (96, 96)).unwrap() {
            let oval = p.oval_for(96, 96);
            let vals: Vec<f64> = (0..96)
                .flat_map(|r| (0..96).map(move |c| (r, c)))
                .filter(|&(r, c)| oval.contains(r, c))
                .map(|(r, c)| f.image.get(r, c))
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(v > 0.0);
            assert!(f.eye_region.check_within(96, 96).is_ok());
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(gen_synthetic_faces(0, 1, (100, 100)).is_err());
        assert!(matches!(gen_synthetic_faces(1, 1, (20, 100)), Err(Error::TooSmall(_))));
    }
}
