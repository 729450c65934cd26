use crate::error::{Error, Result};

/// Integer pixel box, half-open on the max edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min >= x_max || y_min >= y_max {
            return Err(Error::invalid(format!(
                "degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self::new_unchecked(x_min, y_min, x_max, y_max))
    }

    pub(crate) fn new_unchecked(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Box covering a whole `width x height` image.
    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(0, 0, width, height)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.x_min < other.x_max
            && other.x_min < self.x_max
            && self.y_min < other.y_max
            && other.y_min < self.y_max
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::invalid(format!("degenerate box {self:?}")));
        }
        if self.x_max > width || self.y_max > height {
            return Err(Error::invalid(format!(
                "box [{}, {}, {}, {}] exceeds {width}x{height} bounds",
                self.x_min, self.y_min, self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [usize; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn translate(&self, dx: usize, dy: usize) -> BBox {
        BBox::new_unchecked(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }
}
