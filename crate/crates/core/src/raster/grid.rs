use crate::error::{Error, Result};

use super::{BBox, BitMask};

/// Row-major real-valued raster with no range constraint.
///
/// Used as the accumulator for pasting, where sums leave `[0, 1]` until the
/// caller re-normalises.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} grid, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite grid value {v}")));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Elementwise map, keeping dimensions.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Nearest-neighbour resample to `width x height` using pixel-centre alignment.
    pub fn resample_nearest(&self, width: usize, height: usize) -> Grid {
        let xs = nearest_indices(self.width, width);
        let ys = nearest_indices(self.height, height);
        let mut values = Vec::with_capacity(width * height);
        for &sy in &ys {
            for &sx in &xs {
                values.push(self.get(sx, sy));
            }
        }
        Grid {
            width,
            height,
            values,
        }
    }
}

/// Source index for each of `dst_len` destination samples: `floor((2i+1)·src / (2·dst))`.
///
/// Pure integer arithmetic so resampling is bit-exact and platform independent.
pub(crate) fn nearest_indices(src_len: usize, dst_len: usize) -> Vec<usize> {
    (0..dst_len)
        .map(|i| ((2 * i + 1) * src_len / (2 * dst_len)).min(src_len.saturating_sub(1)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PasteMode {
    Sum,
    Max,
}

/// Resamples `src` to the size of `bbox` and writes it into `dst` inside the box.
///
/// Pixels outside the box are untouched. `Sum` accumulates raw values, `Max`
/// keeps the larger one.
pub fn paste(src: &Grid, dst: &mut Grid, bbox: BBox, mode: PasteMode) -> Result<()> {
    bbox.check_within(dst.width, dst.height)?;
    if src.width == 0 || src.height == 0 {
        return Err(Error::invalid("cannot paste an empty source grid"));
    }
    let resampled = src.resample_nearest(bbox.width(), bbox.height());
    for y in 0..bbox.height() {
        let row = (y + bbox.y_min) * dst.width + bbox.x_min;
        let dst_row = &mut dst.values[row..row + bbox.width()];
        let src_row = &resampled.values[y * bbox.width()..(y + 1) * bbox.width()];
        for (d, &s) in dst_row.iter_mut().zip(src_row) {
            *d = match mode {
                PasteMode::Sum => *d + s,
                PasteMode::Max => d.max(s),
            };
        }
    }
    Ok(())
}

/// Per-pixel probabilities in the closed interval `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid(Grid);

impl ProbGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("probability {v} outside [0, 1]")));
        }
        Grid::new(width, height, values).map(ProbGrid)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Hard probabilities: 1 on set pixels, 0 elsewhere.
    pub fn from_mask(mask: &BitMask) -> Self {
        ProbGrid(Grid {
            width: mask.width(),
            height: mask.height(),
            values: mask.iter().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub(crate) fn check_same_dims(&self, other: &ProbGrid) -> Result<()> {
        check_dims(self.width(), self.height(), other.width(), other.height())
    }

    pub fn crop(&self, bbox: BBox) -> Result<ProbGrid> {
        bbox.check_within(self.width(), self.height())?;
        let mut values = Vec::with_capacity(bbox.area());
        for y in bbox.y_min..bbox.y_max {
            values.extend_from_slice(
                &self.0.values[y * self.width() + bbox.x_min..y * self.width() + bbox.x_max],
            );
        }
        Ok(ProbGrid(Grid {
            width: bbox.width(),
            height: bbox.height(),
            values,
        }))
    }

    pub fn resample_nearest(&self, width: usize, height: usize) -> ProbGrid {
        ProbGrid(self.0.resample_nearest(width, height))
    }

    /// Pastes `self` (resampled to the box) onto a zero canvas of `width x height`.
    pub fn place_in(&self, width: usize, height: usize, bbox: BBox) -> Result<ProbGrid> {
        let mut canvas = Grid::zeros(width, height);
        paste(&self.0, &mut canvas, bbox, PasteMode::Max)?;
        Ok(ProbGrid(canvas))
    }
}

impl TryFrom<Grid> for ProbGrid {
    type Error = Error;

    fn try_from(grid: Grid) -> Result<Self> {
        ProbGrid::new(grid.width, grid.height, grid.values)
    }
}

pub(crate) fn check_dims(lw: usize, lh: usize, rw: usize, rh: usize) -> Result<()> {
    if lw != rw || lh != rh {
        return Err(Error::DimensionMismatch {
            left_w: lw,
            left_h: lh,
            right_w: rw,
            right_h: rh,
        });
    }
    Ok(())
}

/// Default binarisation threshold for probability grids.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Sets a bit wherever the probability is strictly greater than `threshold`.
pub fn binarize(p: &ProbGrid, threshold: f64) -> Result<BitMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!(
            "binarisation threshold {threshold} outside (0, 1)"
        )));
    }
    let bits: Vec<bool> = p.values().iter().map(|&v| v > threshold).collect();
    BitMask::from_bools(p.width(), p.height(), &bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_is_strict() {
        let ones = ProbGrid::filled(3, 3, 1.0).unwrap();
        assert_eq!(binarize(&ones, 0.5).unwrap(), BitMask::full(3, 3));
        let halves = ProbGrid::filled(3, 3, 0.5).unwrap();
        assert!(binarize(&halves, 0.5).unwrap().is_empty());
        let mixed = ProbGrid::new(2, 2, vec![0.2, 0.7, 0.5, 0.9]).unwrap();
        let m = binarize(&mixed, 0.5).unwrap();
        assert_eq!(m.to_bools(), vec![false, true, false, true]);
    }

    #[test]
    fn binarize_rejects_bad_threshold() {
        let g = ProbGrid::filled(1, 1, 0.3).unwrap();
        assert!(binarize(&g, 0.0).is_err());
        assert!(binarize(&g, 1.0).is_err());
        assert!(binarize(&g, f64::NAN).is_err());
    }

    #[test]
    fn prob_grid_range_checked() {
        assert!(ProbGrid::new(1, 2, vec![0.0, 1.0]).is_ok());
        assert!(ProbGrid::new(1, 1, vec![1.0001]).is_err());
        assert!(ProbGrid::new(1, 1, vec![f64::NAN]).is_err());
        assert!(ProbGrid::new(2, 2, vec![0.0]).is_err());
    }

    #[test]
    fn paste_zero_leaves_destination() {
        let mut dst = Grid::filled(5, 5, 0.3);
        let before = dst.clone();
        paste(
            &Grid::zeros(2, 2),
            &mut dst,
            BBox::new(1, 1, 4, 4).unwrap(),
            PasteMode::Sum,
        )
        .unwrap();
        assert_eq!(dst, before);
    }

    #[test]
    fn sum_paste_accumulates_raw_values() {
        let mut dst = Grid::filled(4, 4, 0.3);
        let bbox = BBox::new(0, 0, 2, 2).unwrap();
        paste(&Grid::filled(2, 2, 0.4), &mut dst, bbox, PasteMode::Sum).unwrap();
        assert!((dst.get(1, 1) - 0.7).abs() < 1e-15);
        assert_eq!(dst.get(2, 2), 0.3);
    }

    #[test]
    fn nearest_upsample_reproduces_blocks() {
        // hand-computed: 2 -> 4 maps destination indices [0,1,2,3] to source [0,0,1,1]
        assert_eq!(nearest_indices(2, 4), vec![0, 0, 1, 1]);
        let src = Grid::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut dst = Grid::zeros(6, 6);
        paste(
            &src,
            &mut dst,
            BBox::new(1, 1, 5, 5).unwrap(),
            PasteMode::Max,
        )
        .unwrap();
        let expected = [
            [1.0, 1.0, 2.0, 2.0],
            [1.0, 1.0, 2.0, 2.0],
            [3.0, 3.0, 4.0, 4.0],
            [3.0, 3.0, 4.0, 4.0],
        ];
        for (y, row) in expected.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                assert_eq!(dst.get(x + 1, y + 1), v);
            }
        }
        assert_eq!(dst.get(0, 0), 0.0);
        assert_eq!(dst.get(5, 5), 0.0);
    }

    #[test]
    fn nearest_downsample_and_identity() {
        assert_eq!(nearest_indices(5, 5), vec![0, 1, 2, 3, 4]);
        assert_eq!(nearest_indices(28, 7), vec![2, 6, 10, 14, 18, 22, 26]);
        assert_eq!(nearest_indices(3, 1), vec![1]);
    }

    #[test]
    fn paste_out_of_bounds_rejected() {
        let mut dst = Grid::zeros(4, 4);
        let err = paste(
            &Grid::zeros(1, 1),
            &mut dst,
            BBox::new(2, 2, 5, 4).unwrap(),
            PasteMode::Sum,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
