//! Mask-guided attention: instance predictions summed into an image-level map
//! that reweights a feature grid elementwise.
//!
//! Each prediction is converted to logits, pasted into its box (nearest
//! neighbour, sum), and the accumulated logits go through a sigmoid. Pixels
//! outside every box therefore sit at 0.5.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::raster::{nearest_indices, paste, BBox, Grid, PasteMode, ProbGrid};

/// Probability clamp before taking logits; bounds each logit near ±13.8.
pub const LOGIT_EPSILON: f64 = 1e-6;

/// Saturation of the accumulated logit, keeping the sigmoid strictly inside (0, 1) in f64.
const MAX_ACCUMULATED_LOGIT: f64 = 36.0;

#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_EPSILON, 1.0 - LOGIT_EPSILON);
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One recombined instance prediction in RoI space.
#[derive(Debug, Clone)]
pub struct RoiPrediction {
    pub grid: ProbGrid,
    pub bbox: BBox,
    pub score: Option<f64>,
}

/// Image-level attention values, strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_prob_grid(&self) -> ProbGrid {
        ProbGrid::new(self.width, self.height, self.values.clone())
            .expect("attention lies in (0, 1)")
    }

    /// Nearest-neighbour resample to a feature resolution.
    pub fn resample_nearest(&self, width: usize, height: usize) -> AttentionMap {
        let xs = nearest_indices(self.width, width);
        let ys = nearest_indices(self.height, height);
        let values = ys
            .iter()
            .flat_map(|&sy| xs.iter().map(move |&sx| (sx, sy)))
            .map(|(sx, sy)| self.get(sx, sy))
            .collect();
        AttentionMap {
            width,
            height,
            values,
        }
    }
}

pub fn aggregate_attention(
    preds: &[RoiPrediction],
    width: usize,
    height: usize,
) -> Result<AttentionMap> {
    let mut acc = Grid::zeros(width, height);
    for pred in preds {
        pred.bbox.check_within(width, height)?;
        let logits = pred.grid.as_grid().map(logit);
        paste(&logits, &mut acc, pred.bbox, PasteMode::Sum)?;
    }
    let values = acc
        .values()
        .iter()
        .map(|&z| sigmoid(z.clamp(-MAX_ACCUMULATED_LOGIT, MAX_ACCUMULATED_LOGIT)))
        .collect();
    Ok(AttentionMap {
        width,
        height,
        values,
    })
}

/// Dense feature tensor laid out channel-major: index `(c·height + y)·width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<f32>,
}

impl FeatureGrid {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("feature grid needs at least one channel"));
        }
        if values.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "expected {} feature values for {width}x{height}x{channels}, got {}",
                width * height * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(Self {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.values[(c * self.height + y) * self.width + x]
    }

    /// Reads the flat binary layout: `width, height, channels` as little-endian
    /// u32, then little-endian f32 values channel-major.
    pub fn read_from(mut reader: impl Read) -> Result<Self> {
        let mut header = [0u8; 12];
        reader
            .read_exact(&mut header)
            .map_err(|e| Error::CorruptData(format!("feature header: {e}")))?;
        let dim =
            |i: usize| u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
        let (width, height, channels) = (dim(0), dim(1), dim(2));
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::CorruptData("feature dimensions overflow".into()))?;
        let mut body = Vec::new();
        reader
            .read_to_end(&mut body)
            .map_err(|e| Error::CorruptData(format!("feature body: {e}")))?;
        if body.len() != n * 4 {
            return Err(Error::CorruptData(format!(
                "feature body has {} bytes, header implies {}",
                body.len(),
                n * 4
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        FeatureGrid::new(width, height, channels, values)
            .map_err(|e| Error::CorruptData(e.to_string()))
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        for d in [self.width, self.height, self.channels] {
            writer.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in &self.values {
            writer.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}

/// `out[c, y, x] = attention[y, x] · features[c, y, x]`, with the attention
/// resampled to the feature resolution.
pub fn reweight(features: &FeatureGrid, attn: &AttentionMap) -> Result<FeatureGrid> {
    if features.width == 0 || features.height == 0 || attn.width == 0 || attn.height == 0 {
        return Err(Error::invalid("cannot reweight empty grids"));
    }
    let attn = attn.resample_nearest(features.width, features.height);
    let plane = features.width * features.height;
    let values = features
        .values
        .iter()
        .enumerate()
        .map(|(i, &f)| (attn.values[i % plane] * f64::from(f)) as f32)
        .collect();
    FeatureGrid::new(features.width, features.height, features.channels, values)
}
