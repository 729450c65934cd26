//! Tooling for overlapping translucent cell instance segmentation.
//!
//! Instance masks are split into intersection and complement layers
//! ([`decompose`]), layer predictions are merged back with a soft exclusive-or
//! and scored with the training losses ([`recombine`]), recombined predictions
//! drive a feature attention map ([`attention`]), synthetic overlapping
//! clusters come with exact layer ground truth ([`synth`]), and [`metrics`]
//! evaluates predictions. [`io`] and [`cli`] wire all of it to JSON manifests
//! and the `deoverlap` binary.

pub mod annotation;
pub mod attention;
pub mod cli;
pub mod decompose;
pub mod error;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod recombine;
pub mod synth;

pub use annotation::{CellClass, ImageAnnotation, InstanceAnnotation};
pub use error::{Error, Result};
pub use raster::{BBox, BitMask, Grid, ProbGrid};
