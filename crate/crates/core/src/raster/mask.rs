use crate::error::{Error, Result};

use super::BBox;

const WORD_BITS: usize = 64;

/// Row-major binary raster packed into 64-bit words.
///
/// Bits past `width * height` in the last word are always zero, so word-wise
/// set algebra and popcounts never see stray pixels.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            words: vec![0; n.div_ceil(WORD_BITS)],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        let mut mask = Self::empty(width, height);
        mask.words.iter_mut().for_each(|w| *w = u64::MAX);
        mask.clear_tail();
        mask
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set_index(y * width + x);
                }
            }
        }
        mask
    }

    /// Builds a mask from row-major booleans; `bits.len()` must be `width * height`.
    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} pixels for a {width}x{height} mask, got {}",
                width * height,
                bits.len()
            )));
        }
        let mut mask = Self::empty(width, height);
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            mask.set_index(i);
        }
        Ok(mask)
    }

    /// Axis-aligned filled rectangle, half-open on the max edges.
    pub fn from_box(width: usize, height: usize, bbox: BBox) -> Result<Self> {
        bbox.check_within(width, height)?;
        Ok(Self::from_fn(width, height, |x, y| bbox.contains(x, y)))
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x}, {y}) outside {}x{} mask",
            self.width,
            self.height
        );
        let i = y * self.width + x;
        if value {
            self.set_index(i);
        } else {
            self.words[i / WORD_BITS] &= !(1u64 << (i % WORD_BITS));
        }
    }

    #[inline]
    fn set_index(&mut self, i: usize) {
        self.words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
    }

    fn clear_tail(&mut self) {
        let rem = self.len() % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Row-major iterator over all pixels.
    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get_index(i))
    }

    /// Row-major iterator over the flat indices of set pixels.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + tz)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    pub(crate) fn check_same_dims(&self, other: &BitMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }

    fn zip_words(&self, other: &BitMask, op: impl Fn(u64, u64) -> u64) -> Result<BitMask> {
        self.check_same_dims(other)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(BitMask {
            width: self.width,
            height: self.height,
            words,
        })
    }

    pub fn intersect(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn union(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_words(other, |a, b| a | b)
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn xor(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_words(other, |a, b| a ^ b)
    }

    /// In-place union, used by accumulators that fold many masks.
    pub fn union_with(&mut self, other: &BitMask) -> Result<()> {
        self.check_same_dims(other)?;
        self.words
            .iter_mut()
            .zip(&other.words)
            .for_each(|(a, &b)| *a |= b);
        Ok(())
    }

    /// `|self ∩ other|` without materialising the intersection.
    pub fn intersection_area(&self, other: &BitMask) -> Result<u64> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| u64::from((a & b).count_ones()))
            .sum())
    }

    pub fn union_area(&self, other: &BitMask) -> Result<u64> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(&a, &b)| u64::from((a | b).count_ones()))
            .sum())
    }

    pub fn is_subset_of(&self, other: &BitMask) -> Result<bool> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .all(|(&a, &b)| a & !b == 0))
    }

    /// Tight bounding box of the set pixels, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BBox> {
        let mut x_min = usize::MAX;
        let mut y_min = usize::MAX;
        let mut x_max = 0;
        let mut y_max = 0;
        let mut any = false;
        for i in self.ones() {
            let (x, y) = (i % self.width, i / self.width);
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
            any = true;
        }
        any.then(|| BBox::new_unchecked(x_min, y_min, x_max + 1, y_max + 1))
    }

    /// Copy of the pixels inside `bbox`, as a `bbox.width() x bbox.height()` mask.
    pub fn crop(&self, bbox: BBox) -> Result<BitMask> {
        bbox.check_within(self.width, self.height)?;
        Ok(BitMask::from_fn(bbox.width(), bbox.height(), |x, y| {
            self.get(x + bbox.x_min, y + bbox.y_min)
        }))
    }

    /// Places `self` onto an empty `width x height` canvas with its top-left
    /// corner at `(dx, dy)`. The shifted mask must fit entirely.
    pub fn shifted_onto(
        &self,
        width: usize,
        height: usize,
        dx: usize,
        dy: usize,
    ) -> Result<BitMask> {
        if dx + self.width > width || dy + self.height > height {
            return Err(Error::invalid(format!(
                "{}x{} mask at offset ({dx}, {dy}) does not fit a {width}x{height} canvas",
                self.width, self.height
            )));
        }
        let mut out = BitMask::empty(width, height);
        for i in self.ones() {
            let (x, y) = (i % self.width, i / self.width);
            out.set_index((y + dy) * width + x + dx);
        }
        Ok(out)
    }
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "BitMask {}x{} (area {})",
            self.width,
            self.height,
            self.area()
        )?;
        if self.len() <= 64 * 64 {
            for y in 0..self.height {
                let row: String = (0..self.width)
                    .map(|x| if self.get(x, y) { '#' } else { '.' })
                    .collect();
                writeln!(f, "  {row}")?;
            }
        }
        Ok(())
    }
}

/// `|a ∩ b| / |a ∪ b|`; undefined when both masks are empty.
pub fn iou(a: &BitMask, b: &BitMask) -> Result<f64> {
    let union = a.union_area(b)?;
    if union == 0 {
        return Err(Error::UndefinedIou);
    }
    Ok(a.intersection_area(b)? as f64 / union as f64)
}
