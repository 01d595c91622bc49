/// Responses of one scale (S1) or band (C1): a `rows × cols × orientations`
/// grid stored row-major with orientation fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub rows: usize,
    pub cols: usize,
    pub orientations: usize,
    /// Image-pixel offset of cell (0, 0) and cell spacing; cell (r, c)
    /// covers pixels starting at `origin + r * stride`.
    pub origin: usize,
    pub stride: usize,
    /// Pixel extent covered by one cell.
    pub extent: usize,
    pub values: Vec<f32>,
}

impl Level {
    pub fn zeros(rows: usize, cols: usize, orientations: usize) -> Self {
        Self { rows, cols, orientations, origin: 0, stride: 1, extent: 1, values: vec![0.0; rows * cols * orientations] }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ori: usize) -> f32 {
        self.values[(row * self.cols + col) * self.orientations + ori]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.cols + col) * self.orientations;
        &self.values[i..i + self.orientations]
    }

    /// Copies the `k × k` patch at (row, col) in row, col, orientation order.
    pub fn patch(&self, row: usize, col: usize, k: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(k * k * self.orientations);
        self.patch_into(row, col, k, &mut out);
        out
    }

    pub(crate) fn patch_into(&self, row: usize, col: usize, k: usize, out: &mut Vec<f32>) {
        let span = k * self.orientations;
        for r in row..row + k {
            let start = (r * self.cols + col) * self.orientations;
            out.extend_from_slice(&self.values[start..start + span]);
        }
    }
}

/// A stack of levels indexed by scale (S1) or band (C1). Levels that were
/// not computed are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub orientations: usize,
    pub levels: Vec<Option<Level>>,
}

impl FeatureMap {
    pub fn level(&self, index: usize) -> Option<&Level> {
        self.levels.get(index).and_then(|l| l.as_ref())
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().flatten().all(|l| l.values.iter().all(|v| v.is_finite()))
    }
}
