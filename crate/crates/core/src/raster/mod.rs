//! Binary and probabilistic rasters, boxes, and the RLE codec.
//!
//! Everything here is a pure function of immutable inputs.

mod bbox;
mod grid;
mod mask;
mod rle;

pub use bbox::BBox;
pub use grid::{binarize, paste, Grid, PasteMode, ProbGrid, DEFAULT_THRESHOLD};
pub(crate) use grid::{check_dims, nearest_indices};
pub use mask::{iou, BitMask};
pub use rle::{rle_decode, rle_encode, Rle};
