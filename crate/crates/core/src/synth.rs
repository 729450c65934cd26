//! Synthetic overlapping clusters from annotated cell crops.
//!
//! Cells are placed one at a time, each at an overlap ratio against the union
//! of the cells already placed, then alpha-composited in placement order. The
//! intersection/complement layers are recorded while placing, so they serve as
//! an independent check on [`crate::decompose`].

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, ImageAnnotation, InstanceAnnotation};
use crate::decompose::{ClusterDecomposition, OverlapGraph, RegionLayers};
use crate::error::{Error, Result};
use crate::raster::BitMask;

/// Pixels of one cell, tight to its mask; pixels outside the mask are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCrop {
    pub class: CellClass,
    pub pixels: RgbImage,
    pub mask: BitMask,
}

impl CellCrop {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default)]
    pub seed: u64,
    pub cells_per_cluster: usize,
    pub target_overlap: f64,
    pub overlap_tolerance: f64,
    pub alpha: f64,
    #[serde(default = "default_attempts")]
    pub max_placement_attempts: usize,
    #[serde(default = "default_restarts")]
    pub max_cluster_restarts: usize,
    /// `[width, height]`
    pub canvas: [usize; 2],
    #[serde(default = "default_background")]
    pub background: [u8; 3],
}

fn default_attempts() -> usize {
    1000
}

fn default_restarts() -> usize {
    32
}

fn default_background() -> [u8; 3] {
    [230, 230, 230]
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cells_per_cluster: 2,
            target_overlap: 0.3,
            overlap_tolerance: 0.05,
            alpha: 0.5,
            max_placement_attempts: default_attempts(),
            max_cluster_restarts: default_restarts(),
            canvas: [128, 128],
            background: default_background(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells_per_cluster < 2 {
            return Err(Error::invalid("cells_per_cluster must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.target_overlap) {
            return Err(Error::invalid(format!(
                "target_overlap {} outside [0, 1)",
                self.target_overlap
            )));
        }
        if self.overlap_tolerance.is_nan()
            || self.overlap_tolerance <= 0.0
            || self.target_overlap + self.overlap_tolerance >= 1.0
        {
            return Err(Error::invalid(
                "overlap_tolerance must be > 0 with target_overlap + overlap_tolerance < 1",
            ));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha {} outside (0, 1]",
                self.alpha
            )));
        }
        if self.max_placement_attempts == 0 || self.max_cluster_restarts == 0 {
            return Err(Error::invalid("attempt limits must be positive"));
        }
        if self.canvas[0] == 0 || self.canvas[1] == 0 {
            return Err(Error::invalid("canvas must be non-empty"));
        }
        Ok(())
    }

    fn ratio_bounds(&self) -> (f64, f64) {
        (
            self.target_overlap - self.overlap_tolerance,
            self.target_overlap + self.overlap_tolerance,
        )
    }
}

/// One generated cluster with its exact ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: RgbImage,
    pub annotation: ImageAnnotation,
    pub recorded_layers: ClusterDecomposition,
    /// Overlap ratio of each placed cell (after the first) against the cells before it.
    pub achieved_overlaps: Vec<f64>,
}

/// `|a ∩ b| / min(|a|, |b|)`, 0 when either mask is empty.
pub fn overlap_ratio(a: &BitMask, b: &BitMask) -> Result<f64> {
    let smaller = a.area().min(b.area());
    if smaller == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection_area(b)? as f64 / smaller as f64)
}

/// Crops the pixels under `instance` out of `source`.
pub fn extract_cell(source: &RgbImage, instance: &InstanceAnnotation) -> Result<CellCrop> {
    let mask = instance.mask();
    if mask.width() != source.width() as usize || mask.height() != source.height() as usize {
        return Err(Error::invalid(format!(
            "instance {} mask is {}x{}, source image is {}x{}",
            instance.id,
            mask.width(),
            mask.height(),
            source.width(),
            source.height()
        )));
    }
    let bbox = mask
        .bbox()
        .ok_or_else(|| Error::invalid(format!("instance {} has an empty mask", instance.id)))?;
    let crop_mask = mask.crop(bbox)?;
    let pixels = RgbImage::from_fn(bbox.width() as u32, bbox.height() as u32, |x, y| {
        if crop_mask.get(x as usize, y as usize) {
            *source.get_pixel(x + bbox.x_min as u32, y + bbox.y_min as u32)
        } else {
            Rgb([0, 0, 0])
        }
    });
    Ok(CellCrop {
        class: instance.class,
        pixels,
        mask: crop_mask,
    })
}

/// A filled ellipse crop with a radial shading, for procedural cell banks.
pub fn ellipse_cell(
    width: usize,
    height: usize,
    color: [u8; 3],
    class: CellClass,
) -> Result<CellCrop> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("ellipse cell must be non-empty"));
    }
    let (rx, ry) = (width as f64 / 2.0, height as f64 / 2.0);
    let radius = |x: usize, y: usize| {
        let dx = (x as f64 + 0.5 - rx) / rx;
        let dy = (y as f64 + 0.5 - ry) / ry;
        dx * dx + dy * dy
    };
    let mask = BitMask::from_fn(width, height, |x, y| radius(x, y) <= 1.0);
    if mask.is_empty() {
        return Err(Error::invalid("ellipse cell has no pixels"));
    }
    let pixels = RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let r2 = radius(x as usize, y as usize);
        if r2 > 1.0 {
            return Rgb([0, 0, 0]);
        }
        let shade = 0.75 + 0.25 * r2;
        Rgb(color.map(|c| (f64::from(c) * shade).round() as u8))
    });
    let tight = mask.bbox().expect("non-empty");
    let crop_mask = mask.crop(tight)?;
    let pixels = image::imageops::crop_imm(
        &pixels,
        tight.x_min as u32,
        tight.y_min as u32,
        tight.width() as u32,
        tight.height() as u32,
    )
    .to_image();
    Ok(CellCrop {
        class,
        pixels,
        mask: crop_mask,
    })
}

fn check_fits(crop: &CellCrop, cfg: &SynthConfig) -> Result<()> {
    if crop.width() > cfg.canvas[0] || crop.height() > cfg.canvas[1] || crop.mask.is_empty() {
        return Err(Error::invalid(format!(
            "{}x{} cell does not fit the {}x{} canvas",
            crop.width(),
            crop.height(),
            cfg.canvas[0],
            cfg.canvas[1]
        )));
    }
    Ok(())
}

fn shared_pixels(base: &BitMask, incoming: &BitMask, dx: usize, dy: usize) -> u64 {
    let w = incoming.width();
    incoming
        .ones()
        .filter(|&i| base.get(i % w + dx, i / w + dy))
        .count() as u64
}

/// Draws offsets for `incoming` until its overlap ratio against `base`
/// (a canvas-sized mask) lands inside the configured tolerance band.
///
/// When the band excludes zero only offsets whose box touches `base`'s box
/// are drawn, since the others cannot overlap at all.
pub fn place_with_overlap<R: Rng + ?Sized>(
    base: &BitMask,
    incoming: &CellCrop,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let [cw, ch] = cfg.canvas;
    if base.width() != cw || base.height() != ch {
        return Err(Error::invalid("base mask must be canvas-sized"));
    }
    check_fits(incoming, cfg)?;
    let (iw, ih) = (incoming.width(), incoming.height());
    let (lo, hi) = cfg.ratio_bounds();
    let mut x_range = (0, cw - iw);
    let mut y_range = (0, ch - ih);
    if lo > 0.0 {
        let bb = base.bbox().ok_or(Error::PlacementFailure { attempts: 0 })?;
        x_range = (bb.x_min.saturating_sub(iw - 1), (bb.x_max - 1).min(cw - iw));
        y_range = (bb.y_min.saturating_sub(ih - 1), (bb.y_max - 1).min(ch - ih));
        if x_range.0 > x_range.1 || y_range.0 > y_range.1 {
            return Err(Error::PlacementFailure { attempts: 0 });
        }
    }
    let smaller = base.area().min(incoming.mask.area());
    for _ in 0..cfg.max_placement_attempts {
        let dx = rng.random_range(x_range.0..=x_range.1);
        let dy = rng.random_range(y_range.0..=y_range.1);
        let ratio = if smaller == 0 {
            0.0
        } else {
            shared_pixels(base, &incoming.mask, dx, dy) as f64 / smaller as f64
        };
        if ratio >= lo && ratio <= hi {
            return Ok((dx, dy));
        }
    }
    Err(Error::PlacementFailure {
        attempts: cfg.max_placement_attempts,
    })
}

/// Blends each cell over what lies beneath it, in order:
/// `out = α·cell + (1−α)·under` on the cell's mask, rounded to nearest.
pub fn composite(
    cells: &[(&CellCrop, (usize, usize))],
    alpha: f64,
    background: &RgbImage,
) -> Result<RgbImage> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut out = background.clone();
    for (crop, (dx, dy)) in cells {
        if dx + crop.width() > out.width() as usize || dy + crop.height() > out.height() as usize {
            return Err(Error::invalid("placement outside canvas"));
        }
        for i in crop.mask.ones() {
            let (x, y) = ((i % crop.width()) as u32, (i / crop.width()) as u32);
            let cell = crop.pixels.get_pixel(x, y).0;
            let under = out.get_pixel_mut(x + *dx as u32, y + *dy as u32);
            for (u, &c) in under.0.iter_mut().zip(&cell) {
                let v = alpha * f64::from(c) + (1.0 - alpha) * f64::from(*u);
                *u = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Tiles `tile` across a `width x height` canvas.
pub fn tile_background(tile: &RgbImage, width: usize, height: usize) -> Result<RgbImage> {
    if tile.width() == 0 || tile.height() == 0 {
        return Err(Error::invalid("background tile is empty"));
    }
    Ok(RgbImage::from_fn(width as u32, height as u32, |x, y| {
        *tile.get_pixel(x % tile.width(), y % tile.height())
    }))
}

/// Generates one cluster on the configured uniform background.
pub fn generate(cfg: &SynthConfig, cell_bank: &[CellCrop]) -> Result<SynthSample> {
    let bg = RgbImage::from_pixel(
        cfg.canvas[0] as u32,
        cfg.canvas[1] as u32,
        Rgb(cfg.background),
    );
    generate_on(cfg, cell_bank, &bg)
}

/// Generates one cluster over a caller-supplied canvas-sized background.
pub fn generate_on(
    cfg: &SynthConfig,
    cell_bank: &[CellCrop],
    background: &RgbImage,
) -> Result<SynthSample> {
    cfg.validate()?;
    let [cw, ch] = cfg.canvas;
    if background.width() as usize != cw || background.height() as usize != ch {
        return Err(Error::invalid("background must match the canvas size"));
    }
    let first = cell_bank
        .first()
        .ok_or_else(|| Error::invalid("cell bank is empty"))?;
    for crop in cell_bank {
        check_fits(crop, cfg)?;
        if crop.class != first.class {
            return Err(Error::invalid("cell bank mixes classes"));
        }
    }
    let (lo, hi) = cfg.ratio_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    'restart: for _ in 0..cfg.max_cluster_restarts {
        let mut placed: Vec<(&CellCrop, (usize, usize))> =
            Vec::with_capacity(cfg.cells_per_cluster);
        let mut union = BitMask::empty(cw, ch);
        let mut achieved = Vec::with_capacity(cfg.cells_per_cluster - 1);

        let seed_cell = &cell_bank[rng.random_range(0..cell_bank.len())];
        let offset = (
            rng.random_range(0..=cw - seed_cell.width()),
            rng.random_range(0..=ch - seed_cell.height()),
        );
        union.union_with(&seed_cell.mask.shifted_onto(cw, ch, offset.0, offset.1)?)?;
        placed.push((seed_cell, offset));

        while placed.len() < cfg.cells_per_cluster {
            let crop = &cell_bank[rng.random_range(0..cell_bank.len())];
            let offset = match place_with_overlap(&union, crop, cfg, &mut rng) {
                Ok(o) => o,
                Err(Error::PlacementFailure { .. }) => continue 'restart,
                Err(e) => return Err(e),
            };
            let shifted = crop.mask.shifted_onto(cw, ch, offset.0, offset.1)?;
            let ratio = overlap_ratio(&union, &shifted)?;
            if ratio < lo || ratio > hi {
                continue 'restart;
            }
            achieved.push(ratio);
            union.union_with(&shifted)?;
            placed.push((crop, offset));
        }

        let image = composite(&placed, cfg.alpha, background)?;
        let (annotation, recorded_layers) = record_ground_truth(cfg, &placed)?;
        return Ok(SynthSample {
            image,
            annotation,
            recorded_layers,
            achieved_overlaps: achieved,
        });
    }
    Err(Error::GenerationFailure {
        attempts: cfg.max_cluster_restarts,
    })
}

/// Instance masks plus layers tracked pair by pair as cells are stacked.
fn record_ground_truth(
    cfg: &SynthConfig,
    placed: &[(&CellCrop, (usize, usize))],
) -> Result<(ImageAnnotation, ClusterDecomposition)> {
    let [cw, ch] = cfg.canvas;
    let class = placed[0].0.class;
    let mut masks: Vec<BitMask> = Vec::with_capacity(placed.len());
    let mut shared: Vec<BitMask> = Vec::with_capacity(placed.len());
    let mut graph = OverlapGraph::new();
    for (k, (crop, (dx, dy))) in placed.iter().enumerate() {
        let id = k as u64 + 1;
        let mask = crop.mask.shifted_onto(cw, ch, *dx, *dy)?;
        let mut own = BitMask::empty(cw, ch);
        graph.add_node(id);
        for (j, prior) in masks.iter().enumerate() {
            let inter = prior.intersect(&mask)?;
            if inter.is_empty() {
                continue;
            }
            graph.add_edge(j as u64 + 1, id, inter.area());
            shared[j].union_with(&inter)?;
            own.union_with(&inter)?;
        }
        masks.push(mask);
        shared.push(own);
    }
    let mut instances = Vec::with_capacity(masks.len());
    let mut layers = std::collections::BTreeMap::new();
    for (k, (mask, intersection)) in masks.into_iter().zip(shared).enumerate() {
        let id = k as u64 + 1;
        let complement = mask.difference(&intersection)?;
        layers.insert(
            id,
            RegionLayers {
                intersection,
                complement,
            },
        );
        instances.push(InstanceAnnotation::new(id, class, mask)?);
    }
    let annotation = ImageAnnotation::new(format!("synth-{:016x}", cfg.seed), cw, ch, instances)?;
    Ok((
        annotation,
        ClusterDecomposition {
            class,
            layers,
            graph,
        },
    ))
}
