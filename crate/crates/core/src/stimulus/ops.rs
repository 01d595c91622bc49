use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Image;

/// Stimulus-construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusParams {
    /// Resize factor applied before cropping (0.75 = reduce by a quarter).
    pub scale: f64,
    /// Oval semi-axes as fractions of the preprocessed width and height.
    pub oval_semi_width_frac: f64,
    pub oval_semi_height_frac: f64,
    pub target_mean: f64,
    pub target_var: f64,
    /// Background gray; `None` means "use `target_mean`".
    pub background: Option<f64>,
    pub gap_px: usize,
    /// Horizontal offset of misaligned bottom halves; `None` means a quarter
    /// of the oval width, to the right.
    pub misalign_px: Option<isize>,
    pub cfe_attenuation: f64,
    pub wpe_attenuation: f64,
    pub feather_px: usize,
}

impl Default for StimulusParams {
    fn default() -> Self {
        Self {
            scale: 0.75,
            oval_semi_width_frac: 0.38,
            oval_semi_height_frac: 0.48,
            target_mean: 0.5,
            target_var: 0.02,
            background: None,
            gap_px: 2,
            misalign_px: None,
            cfe_attenuation: 0.1,
            wpe_attenuation: 0.5,
            feather_px: 2,
        }
    }
}

impl StimulusParams {
    pub fn background(&self) -> f64 {
        self.background.unwrap_or(self.target_mean)
    }

    /// Preprocessed dimensions for a raw image of the given size.
    pub fn scaled_dims(&self, height: usize, width: usize) -> (usize, usize) {
        (scaled_len(height, self.scale), scaled_len(width, self.scale))
    }

    /// Default oval for a preprocessed image of the given size.
    pub fn oval_for(&self, height: usize, width: usize) -> OvalMask {
        OvalMask {
            center_row: (height as f64 - 1.0) / 2.0,
            center_col: (width as f64 - 1.0) / 2.0,
            semi_rows: self.oval_semi_height_frac * height as f64,
            semi_cols: self.oval_semi_width_frac * width as f64,
            background: self.background(),
        }
    }

    /// Misalignment offset for a preprocessed image of the given size.
    pub fn misalign_for(&self, height: usize, width: usize) -> isize {
        self.misalign_px
            .unwrap_or_else(|| (self.oval_for(height, width).semi_cols / 2.0).round() as isize)
    }

    /// Resize, oval-crop and normalize with the configured defaults.
    pub fn preprocess(&self, img: &Image) -> Result<Image> {
        let (h, w) = self.scaled_dims(img.height(), img.width());
        preprocess(img, self.scale, &self.oval_for(h, w), self.target_mean, self.target_var)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.scale > 0.0
            && self.scale <= 1.0
            && self.oval_semi_width_frac > 0.0
            && self.oval_semi_width_frac <= 0.5
            && self.oval_semi_height_frac > 0.0
            && self.oval_semi_height_frac <= 0.5
            && self.target_var > 0.0
            && self.target_mean.is_finite()
            && (0.0..=1.0).contains(&self.cfe_attenuation)
            && (0.0..=1.0).contains(&self.wpe_attenuation);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("stimulus parameters out of range: {self:?}")))
        }
    }
}

fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

/// Elliptical crop region; pixels outside take `background`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OvalMask {
    pub center_row: f64,
    pub center_col: f64,
    pub semi_rows: f64,
    pub semi_cols: f64,
    pub background: f64,
}

impl OvalMask {
    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        let dr = (row as f64 - self.center_row) / self.semi_rows;
        let dc = (col as f64 - self.center_col) / self.semi_cols;
        dr * dr + dc * dc <= 1.0
    }

    /// Checks that the oval is non-degenerate and lies inside an image of
    /// the given size.
    pub fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        let inside = self.semi_rows > 0.0
            && self.semi_cols > 0.0
            && self.center_row - self.semi_rows >= -0.5
            && self.center_row + self.semi_rows <= height as f64 - 0.5
            && self.center_col - self.semi_cols >= -0.5
            && self.center_col + self.semi_cols <= width as f64 - 0.5;
        if !inside {
            return Err(Error::OutOfBounds(format!("oval {self:?} does not fit a {height}x{width} image")));
        }
        Ok(())
    }
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Region {
    pub fn new(top: usize, left: usize, bottom: usize, right: usize) -> Result<Self> {
        if top >= bottom || left >= right {
            return Err(Error::invalid(format!("empty region ({top},{left})..({bottom},{right})")));
        }
        Ok(Self { top, left, bottom, right })
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top && row < self.bottom && col >= self.left && col < self.right
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.top >= self.bottom || self.left >= self.right || self.bottom > height || self.right > width {
            return Err(Error::OutOfBounds(format!("region {self:?} outside a {height}x{width} image")));
        }
        Ok(())
    }

    /// Smallest region containing both.
    pub fn union(&self, other: &Region) -> Region {
        Region {
            top: self.top.min(other.top),
            left: self.left.min(other.left),
            bottom: self.bottom.max(other.bottom),
            right: self.right.max(other.right),
        }
    }

    /// Maps a region through a resize by `scale`, rounding outward and
    /// clamping to the resized image.
    pub fn scaled(&self, scale: f64, height: usize, width: usize) -> Region {
        let lo = |v: usize| (v as f64 * scale).floor() as usize;
        let hi = |v: usize, max: usize| ((v as f64 * scale).ceil() as usize).min(max);
        let top = lo(self.top).min(height - 1);
        let left = lo(self.left).min(width - 1);
        Region {
            top,
            left,
            bottom: hi(self.bottom, height).max(top + 1),
            right: hi(self.right, width).max(left + 1),
        }
    }
}

fn bilinear_resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    let sy = img.height() as f64 / height as f64;
    let sx = img.width() as f64 / width as f64;
    let max_r = img.height() - 1;
    let max_c = img.width() - 1;
    let sample = |src: f64, max: usize| {
        let s = src.clamp(0.0, max as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(max);
        (i0, i1, s - i0 as f64)
    };
    Image::from_fn(height, width, |r, c| {
        let (r0, r1, fr) = sample((r as f64 + 0.5) * sy - 0.5, max_r);
        let (c0, c1, fc) = sample((c as f64 + 0.5) * sx - 0.5, max_c);
        let top = img.get(r0, c0) * (1.0 - fc) + img.get(r0, c1) * fc;
        let bot = img.get(r1, c0) * (1.0 - fc) + img.get(r1, c1) * fc;
        top * (1.0 - fr) + bot * fr
    })
}

/// Resizes by `scale` (bilinear), sets pixels outside `oval` to its
/// background and affinely rescales the in-oval pixels to the target mean
/// and (population) variance.
pub fn preprocess(img: &Image, scale: f64, oval: &OvalMask, target_mean: f64, target_var: f64) -> Result<Image> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::invalid(format!("scale must be in (0, 1], got {scale}")));
    }
    if !(target_var > 0.0) {
        return Err(Error::invalid(format!("target variance must be positive, got {target_var}")));
    }
    let (h, w) = (scaled_len(img.height(), scale), scaled_len(img.width(), scale));
    oval.check_fits(h, w)?;
    let resized = if h == img.height() && w == img.width() { img.clone() } else { bilinear_resize(img, h, w)? };

    let mut n = 0usize;
    let mut sum = 0.0;
    for r in 0..h {
        for c in 0..w {
            if oval.contains(r, c) {
                n += 1;
                sum += resized.get(r, c);
            }
        }
    }
    if n < 2 {
        return Err(Error::OutOfBounds("oval covers fewer than two pixels".into()));
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    for r in 0..h {
        for c in 0..w {
            if oval.contains(r, c) {
                let d = resized.get(r, c) - mean;
                ss += d * d;
            }
        }
    }
    let var = ss / n as f64;
    if !(var > 1e-24 * (1.0 + mean * mean)) {
        return Err(Error::ZeroVariance("in-oval pixels are constant".into()));
    }
    let gain = (target_var / var).sqrt();
    Image::from_fn(h, w, |r, c| {
        if oval.contains(r, c) {
            target_mean + (resized.get(r, c) - mean) * gain
        } else {
            oval.background
        }
    })
}

/// Splits by 1-based position: odd positions train, even positions test.
pub fn split_train_test<T: Clone>(faces: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if faces.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 faces to split, got {}", faces.len())));
    }
    let train = faces.iter().step_by(2).cloned().collect();
    let test = faces.iter().skip(1).step_by(2).cloned().collect();
    Ok((train, test))
}

/// Upside-down flip (row order reversed).
pub fn invert(img: &Image) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut pixels = Vec::with_capacity(h * w);
    for r in (0..h).rev() {
        pixels.extend_from_slice(img.row(r));
    }
    Image::new(h, w, pixels).expect("flip preserves validity")
}

/// Row index where the bottom half of an image of height `h` begins.
pub(crate) fn half_split(h: usize) -> usize {
    h / 2
}

/// Joins the top half of `top_src` to the bottom half of `bottom_src` with a
/// `gap_px` band of background between them. Misaligned composites shift
/// the bottom half right by `misalign_px` (negative values shift left).
///
/// Both variants are widened by `|misalign_px|` background columns (on the
/// side the bottom half moves to) so a misaligned bottom half stays whole
/// and aligned and misaligned composites share one size.
pub fn make_composite(
    top_src: &Image,
    bottom_src: &Image,
    aligned: bool,
    gap_px: usize,
    misalign_px: isize,
    background: f64,
) -> Result<Image> {
    let (h, w) = (top_src.height(), top_src.width());
    if (bottom_src.height(), bottom_src.width()) != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "composite halves {h}x{w} and {}x{}",
            bottom_src.height(),
            bottom_src.width()
        )));
    }
    if misalign_px.unsigned_abs() >= w {
        return Err(Error::invalid(format!("misalignment {misalign_px} px not smaller than width {w}")));
    }
    let split = half_split(h);
    let top_off = (-misalign_px).max(0);
    let bottom_off = if aligned { top_off } else { top_off + misalign_px };
    let sample = |src: &Image, r: usize, c: usize, off: isize| {
        let sc = c as isize - off;
        if sc < 0 || sc >= w as isize {
            background
        } else {
            src.get(r, sc as usize)
        }
    };
    Image::from_fn(h, w + misalign_px.unsigned_abs(), |r, c| {
        if r < split {
            sample(top_src, r, c, top_off)
        } else if r < split + gap_px {
            background
        } else {
            sample(bottom_src, r - gap_px, c, bottom_off)
        }
    })
}

/// Simulated attention to the top half: rows from the half split down are
/// multiplied by `attenuation`, then the image moves down so the top half
/// is vertically centered. Vacated rows take `background`.
pub fn apply_attention_cfe(img: &Image, attenuation: f64, background: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let split = half_split(h);
    let mut out = img.clone();
    for r in split..h {
        for c in 0..w {
            out.set(r, c, img.get(r, c) * attenuation);
        }
    }
    let shift = ((h - split) / 2) as isize;
    out.translate(shift, 0, background)
}

/// Simulated attention to `region`: pixels outside it are multiplied by
/// `attenuation`, then the image is translated so the region's center sits
/// at the image center. Vacated pixels take the attenuated background.
pub fn apply_attention_wpe(img: &Image, region: &Region, attenuation: f64, background: f64) -> Result<Image> {
    let (h, w) = (img.height(), img.width());
    region.check_within(h, w)?;
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            if !region.contains(r, c) {
                out.set(r, c, img.get(r, c) * attenuation);
            }
        }
    }
    let drow = (h as isize - region.top as isize - region.bottom as isize).div_euclid(2);
    let dcol = (w as isize - region.left as isize - region.right as isize).div_euclid(2);
    Ok(out.translate(drow, dcol, background * attenuation))
}

/// Blend weight of the inserted region at (row, col): ramps linearly over
/// `feather` pixels inside the region border.
fn feather_weight(region: &Region, row: usize, col: usize, feather: usize) -> f64 {
    if !region.contains(row, col) {
        return 0.0;
    }
    if feather == 0 {
        return 1.0;
    }
    let d = (row - region.top)
        .min(region.bottom - 1 - row)
        .min(col - region.left)
        .min(region.right - 1 - col);
    ((d + 1) as f64 / (feather + 1) as f64).min(1.0)
}

/// Whole stimulus: `base_src` with `eye_region` taken from `eyes_src`,
/// feathered over `feather` pixels inside the border. Part stimulus: the
/// whole's eye region on a background canvas.
pub fn make_whole_part(
    eyes_src: &Image,
    base_src: &Image,
    eye_region: &Region,
    feather: usize,
    background: f64,
) -> Result<(Image, Image)> {
    let (h, w) = (base_src.height(), base_src.width());
    if (eyes_src.height(), eyes_src.width()) != (h, w) {
        return Err(Error::DimensionMismatch(format!(
            "eye source {}x{} vs base {h}x{w}",
            eyes_src.height(),
            eyes_src.width()
        )));
    }
    eye_region.check_within(h, w)?;
    let whole = Image::from_fn(h, w, |r, c| {
        let a = feather_weight(eye_region, r, c, feather);
        if a == 0.0 {
            base_src.get(r, c)
        } else if a == 1.0 {
            eyes_src.get(r, c)
        } else {
            a * eyes_src.get(r, c) + (1.0 - a) * base_src.get(r, c)
        }
    })?;
    let part = Image::from_fn(h, w, |r, c| if eye_region.contains(r, c) { whole.get(r, c) } else { background })?;
    Ok((whole, part))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::synth::gen_synthetic_faces;

    fn ramp(h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| ((r * 31 + c * 17) % 23) as f64 / 23.0).unwrap()
    }

    #[test]
    fn preprocess_downscales_by_a_quarter() {
        let img = ramp(256, 256);
        let p = StimulusParams::default();
        let out = p.preprocess(&img).unwrap();
        assert_eq!((out.height(), out.width()), (192, 192));
    }

    #[test]
    fn preprocess_constant_input_fails() {
        let img = Image::filled(64, 64, 0.3);
        let p = StimulusParams::default();
        assert!(matches!(p.preprocess(&img), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn preprocess_rejects_bad_oval_and_scale() {
        let img = ramp(40, 40);
        let mut oval = StimulusParams::default().oval_for(30, 30);
        oval.semi_cols = 40.0;
        assert!(matches!(preprocess(&img, 0.75, &oval, 0.5, 0.02), Err(Error::OutOfBounds(_))));
        assert!(preprocess(&img, 1.5, &oval, 0.5, 0.02).is_err());
        assert!(preprocess(&img, 0.0, &oval, 0.5, 0.02).is_err());
    }

    #[test]
    fn preprocess_hits_target_statistics() {
        let faces = gen_synthetic_faces(3, 11, (308, 300)).unwrap();
        let p = StimulusParams::default();
        for f in &faces {
            let out = p.preprocess(&f.image).unwrap();
            let oval = p.oval_for(out.height(), out.width());
            let vals: Vec<f64> = (0..out.height())
                .flat_map(|r| (0..out.width()).map(move |c| (r, c)))
                .filter(|&(r, c)| oval.contains(r, c))
                .map(|(r, c)| out.get(r, c))
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!((mean - 0.5).abs() <= 1e-9 * 0.5);
            assert!((var - 0.02).abs() <= 1e-9 * 0.02);
            // outside the oval: background
            assert_eq!(out.get(0, 0), 0.5);
        }
    }

    #[test]
    fn split_odd_even() {
        let (tr, te) = split_train_test(&["f1", "f2", "f3", "f4"]).unwrap();
        assert_eq!(tr, vec!["f1", "f3"]);
        assert_eq!(te, vec!["f2", "f4"]);
        let (tr, te) = split_train_test(&["f1", "f2"]).unwrap();
        assert_eq!((tr, te), (vec!["f1"], vec!["f2"]));
        let many: Vec<usize> = (1..=100).collect();
        let (tr, te) = split_train_test(&many).unwrap();
        assert_eq!((tr.len(), te.len()), (50, 50));
        assert!(tr.iter().all(|i| i % 2 == 1));
        assert!(split_train_test(&["only"]).is_err());
    }

    #[test]
    fn invert_basics() {
        let img = Image::new(2, 1, vec![1.0, 2.0]).unwrap();
        assert_eq!(invert(&img).pixels(), &[2.0, 1.0]);
        let r = ramp(7, 5);
        assert_eq!(invert(&invert(&r)), r);
        assert!((invert(&r).mean() - r.mean()).abs() < 1e-15);
    }

    #[test]
    fn self_composite_with_no_gap_is_identity() {
        let f = ramp(9, 6);
        assert_eq!(make_composite(&f, &f, true, 0, 0, 0.5).unwrap(), f);
    }

    #[test]
    fn composite_layout() {
        let top = Image::filled(6, 4, 1.0);
        let bottom = ramp(6, 4);
        let c = make_composite(&top, &bottom, true, 2, 0, 0.5).unwrap();
        assert!((0..3).all(|r| c.row(r).iter().all(|&v| v == 1.0)));
        assert!((3..5).all(|r| c.row(r).iter().all(|&v| v == 0.5)));
        assert_eq!(c.row(5), bottom.row(3));
        let m = make_composite(&top, &bottom, false, 2, 1, 0.5).unwrap();
        assert_eq!(m.width(), 5);
        assert_eq!(m.get(5, 0), 0.5);
        assert_eq!(&m.row(5)[1..], bottom.row(3));
        assert_eq!(&m.row(0)[..4], top.row(0));
        assert_eq!(m.get(0, 4), 0.5);
        let a = make_composite(&top, &bottom, true, 2, 1, 0.5).unwrap();
        assert_eq!(&a.row(5)[..4], bottom.row(3));
        let l = make_composite(&top, &bottom, false, 2, -1, 0.5).unwrap();
        assert_eq!(&l.row(0)[1..], top.row(0));
        assert_eq!(&l.row(5)[..4], bottom.row(3));
    }

    #[test]
    fn composite_errors() {
        let a = ramp(6, 4);
        let b = ramp(6, 5);
        assert!(matches!(make_composite(&a, &b, true, 2, 0, 0.5), Err(Error::DimensionMismatch(_))));
        assert!(make_composite(&a, &a, false, 2, 4, 0.5).is_err());
        assert!(make_composite(&a, &a, false, 2, -4, 0.5).is_err());
    }

    #[test]
    fn aligned_and_misaligned_differ_only_below_gap() {
        let a = ramp(20, 16);
        let b = invert(&ramp(20, 16));
        let al = make_composite(&a, &b, true, 2, 5, 0.5).unwrap();
        let mis = make_composite(&a, &b, false, 2, 5, 0.5).unwrap();
        let split = half_split(20);
        let mut changed_rows = Vec::new();
        for r in 0..20 {
            if al.row(r) != mis.row(r) {
                changed_rows.push(r);
            }
        }
        assert!(!changed_rows.is_empty());
        assert!(changed_rows.iter().all(|&r| r >= split + 2));
    }

    #[test]
    fn cfe_attention() {
        let img = ramp(2, 3);
        assert_eq!(apply_attention_cfe(&img, 1.0, 0.5), img);

        let img = ramp(12, 5);
        let att = apply_attention_cfe(&img, 0.1, 0.5);
        let shift = (12 - 6) / 2;
        for r in 0..6 {
            assert_eq!(att.row(r + shift), img.row(r), "top half untouched");
        }
        for r in 0..shift {
            assert!(att.row(r).iter().all(|&v| v == 0.5));
        }
        assert!((att.get(6 + shift, 2) - 0.1 * img.get(6, 2)).abs() < 1e-15);
    }

    #[test]
    fn wpe_attention() {
        let img = ramp(10, 10);
        let centered = Region::new(3, 3, 7, 7).unwrap();
        assert_eq!(apply_attention_wpe(&img, &centered, 1.0, 0.5).unwrap(), img);

        let region = Region::new(1, 2, 5, 8).unwrap();
        let att = apply_attention_wpe(&img, &region, 0.5, 0.5).unwrap();
        let drow = (10 - 1 - 5) / 2;
        for r in region.top..region.bottom {
            for c in region.left..region.right {
                assert_eq!(att.get(r + drow, c), img.get(r, c));
            }
        }
        assert!((att.get(drow + 5, 0) - 0.5 * img.get(5, 0)).abs() < 1e-15);
        assert_eq!(att.get(0, 0), 0.25);
        assert!(apply_attention_wpe(&img, &Region::new(0, 0, 11, 3).unwrap(), 0.5, 0.5).is_err());
    }

    #[test]
    fn whole_part_construction() {
        let f = ramp(16, 16);
        let g = invert(&ramp(16, 16));
        let r = Region::new(4, 3, 9, 13).unwrap();
        let (whole, part) = make_whole_part(&f, &f, &r, 2, 0.5).unwrap();
        for (a, b) in whole.pixels().iter().zip(f.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        for row in 0..16 {
            for col in 0..16 {
                if !r.contains(row, col) {
                    assert_eq!(part.get(row, col), 0.5);
                } else {
                    assert_eq!(part.get(row, col), whole.get(row, col));
                }
            }
        }
        let (w1, _) = make_whole_part(&f, &g, &r, 2, 0.5).unwrap();
        let (w2, _) = make_whole_part(&invert(&f), &g, &r, 2, 0.5).unwrap();
        for row in 0..16 {
            for col in 0..16 {
                if !r.contains(row, col) {
                    assert_eq!(w1.get(row, col), w2.get(row, col));
                }
            }
        }
        assert!(make_whole_part(&f, &g, &Region::new(10, 0, 17, 4).unwrap(), 2, 0.5).is_err());
        // hard paste
        let (hard, _) = make_whole_part(&g, &f, &r, 0, 0.5).unwrap();
        assert_eq!(hard.get(4, 3), g.get(4, 3));
    }

    #[test]
    fn region_scaling_rounds_outward() {
        let r = Region::new(10, 10, 21, 31).unwrap();
        let s = r.scaled(0.75, 100, 100);
        assert_eq!((s.top, s.left, s.bottom, s.right), (7, 7, 16, 24));
        let u = r.union(&Region::new(5, 20, 15, 40).unwrap());
        assert_eq!((u.top, u.left, u.bottom, u.right), (5, 10, 21, 40));
    }
}
