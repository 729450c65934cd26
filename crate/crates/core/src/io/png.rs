use std::io::Cursor;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageBuffer, ImageEncoder, ImageReader, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::raster::ProbGrid;

/// Probabilities are stored as `round(p · 65535)` in 16-bit grayscale.
pub const PROB_SCALE: f64 = 65535.0;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_prob_png(grid: &ProbGrid) -> Vec<u8> {
    let mut raw = Vec::with_capacity(grid.values().len() * 2);
    for &p in grid.values() {
        let v = (p * PROB_SCALE).round() as u16;
        // the encoder takes native-endian samples and swaps them itself
        raw.extend_from_slice(&v.to_ne_bytes());
    }
    let mut out = Vec::new();
    PngEncoder::new(&mut out)
        .write_image(
            &raw,
            grid.width() as u32,
            grid.height() as u32,
            ExtendedColorType::L16,
        )
        .expect("encoding into memory cannot fail for valid dimensions");
    out
}

pub fn write_prob_png(path: &Path, grid: &ProbGrid) -> Result<()> {
    super::write_atomic(path, &encode_prob_png(grid))
}

/// Reads a grayscale PNG as probabilities; 8-bit images are widened to 16-bit first.
pub fn read_prob_png(path: &Path) -> Result<ProbGrid> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?;
    let luma: ImageBuffer<Luma<u16>, Vec<u16>> = img.into_luma16();
    let values = luma
        .as_raw()
        .iter()
        .map(|&v| f64::from(v) / PROB_SCALE)
        .collect();
    ProbGrid::new(luma.width() as usize, luma.height() as usize, values)
}

/// 8-bit RGB PNG with only the critical chunks.
pub fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new(Cursor::new(&mut out))
        .write_image(
            img.as_raw(),
            img.width(),
            img.height(),
            ExtendedColorType::Rgb8,
        )
        .expect("encoding into memory cannot fail for valid dimensions");
    out
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    super::write_atomic(path, &encode_rgb_png(img))
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    Ok(ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .into_rgb8())
}
