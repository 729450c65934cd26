//! JSON dataset manifest: one record per image, one per instance, masks as RLE.
//!
//! ```json
//! {
//!   "version": "1",
//!   "images": [{
//!     "image_id": "img0", "file_path": "img0.png", "width": 64, "height": 64,
//!     "instances": [{
//!       "id": 1, "class": "cytoplasm", "bbox": [x_min, y_min, x_max, y_max],
//!       "rle": [..], "score": 0.9,
//!       "intersection_rle": [..], "complement_rle": [..]
//!     }]
//!   }]
//! }
//! ```
//!
//! Prediction manifests may instead reference per-instance probability PNGs
//! (`intersection_png`, `complement_png`, `refined_png`, `coarse_png`) that are
//! resampled into the instance box.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, ImageAnnotation, InstanceAnnotation};
use crate::decompose::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::raster::{rle_decode, rle_encode, BBox, BitMask, Rle};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: String,
    pub images: Vec<ImageRecord>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION.to_string(),
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_path: Option<String>,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: u64,
    pub class: CellClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<Rle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection_rle: Option<Rle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_rle: Option<Rle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intersection_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complement_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined_png: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_png: Option<String>,
}

impl InstanceRecord {
    /// A record with only `id` and `class` set.
    pub fn new(id: u64, class: CellClass) -> Self {
        Self {
            id,
            class,
            bbox: None,
            rle: None,
            score: None,
            intersection_rle: None,
            complement_rle: None,
            intersection_png: None,
            complement_png: None,
            refined_png: None,
            coarse_png: None,
        }
    }

    pub fn from_instance(inst: &InstanceAnnotation) -> Self {
        Self {
            bbox: Some(inst.bbox().to_array()),
            rle: Some(rle_encode(inst.mask())),
            score: inst.score,
            ..Self::new(inst.id, inst.class)
        }
    }

    pub fn bbox(&self) -> Result<Option<BBox>> {
        self.bbox
            .map(|[x0, y0, x1, y1]| BBox::new(x0, y0, x1, y1))
            .transpose()
    }

    fn decode(&self, rle: &Rle, width: usize, height: usize, field: &str) -> Result<BitMask> {
        rle_decode(rle, width, height)
            .map_err(|e| Error::CorruptData(format!("instance {} {field}: {e}", self.id)))
    }

    pub fn mask(&self, width: usize, height: usize) -> Result<Option<BitMask>> {
        self.rle
            .as_ref()
            .map(|r| self.decode(r, width, height, "rle"))
            .transpose()
    }

    pub fn intersection_mask(&self, width: usize, height: usize) -> Result<Option<BitMask>> {
        self.intersection_rle
            .as_ref()
            .map(|r| self.decode(r, width, height, "intersection_rle"))
            .transpose()
    }

    pub fn complement_mask(&self, width: usize, height: usize) -> Result<Option<BitMask>> {
        self.complement_rle
            .as_ref()
            .map(|r| self.decode(r, width, height, "complement_rle"))
            .transpose()
    }
}

impl ImageRecord {
    pub fn from_annotation(ann: &ImageAnnotation, file_path: Option<String>) -> Self {
        Self {
            image_id: ann.image_id.clone(),
            file_path,
            width: ann.width(),
            height: ann.height(),
            instances: ann
                .instances()
                .iter()
                .map(InstanceRecord::from_instance)
                .collect(),
        }
    }

    /// Decodes every instance; each must carry an `rle`.
    pub fn to_annotation(&self) -> Result<ImageAnnotation> {
        let instances = self
            .instances
            .iter()
            .map(|rec| {
                let mask = rec.mask(self.width, self.height)?.ok_or_else(|| {
                    Error::invalid(format!(
                        "image {}: instance {} has no rle",
                        self.image_id, rec.id
                    ))
                })?;
                let inst = InstanceAnnotation::new(rec.id, rec.class, mask)
                    .map_err(|e| Error::invalid(format!("image {}: {e}", self.image_id)))?;
                match rec.score {
                    Some(s) => inst.with_score(s),
                    None => Ok(inst),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ImageAnnotation::new(self.image_id.clone(), self.width, self.height, instances)
    }

    /// Writes intersection/complement RLEs of `dec` onto the matching instances.
    pub fn attach_layers(&mut self, dec: &ClusterDecomposition) {
        for rec in self.instances.iter_mut().filter(|r| r.class == dec.class) {
            if let Some(layers) = dec.get(rec.id) {
                rec.intersection_rle = Some(rle_encode(&layers.intersection));
                rec.complement_rle = Some(rle_encode(&layers.complement));
            }
        }
    }

    /// Structural checks that need no pixels beyond RLE sums.
    pub fn validate(&self) -> Result<()> {
        let expected = (self.width * self.height) as u64;
        let mut ids = BTreeSet::new();
        for rec in &self.instances {
            if !ids.insert(rec.id) {
                return Err(Error::invalid(format!(
                    "image {}: duplicate instance id {}",
                    self.image_id, rec.id
                )));
            }
            for (field, rle) in [
                ("rle", &rec.rle),
                ("intersection_rle", &rec.intersection_rle),
                ("complement_rle", &rec.complement_rle),
            ] {
                if let Some(rle) = rle {
                    if rle.total() != expected {
                        return Err(Error::CorruptData(format!(
                            "image {}: instance {} {field} sums to {}, expected {expected}",
                            self.image_id,
                            rec.id,
                            rle.total()
                        )));
                    }
                }
            }
            if let Some(b) = rec.bbox()? {
                b.check_within(self.width, self.height)?;
            }
            if let (Some(rle), Some(b)) = (&rec.rle, rec.bbox) {
                let tight = rec
                    .decode(rle, self.width, self.height, "rle")?
                    .bbox()
                    .map(|t| t.to_array());
                if tight != Some(b) {
                    return Err(Error::invalid(format!(
                        "image {}: instance {} bbox {b:?} is not the tight box {tight:?} of its mask",
                        self.image_id, rec.id
                    )));
                }
            }
            if rec.rle.is_none() && rec.bbox.is_none() {
                return Err(Error::invalid(format!(
                    "image {}: instance {} has neither rle nor bbox",
                    self.image_id, rec.id
                )));
            }
            if let Some(s) = rec.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(Error::invalid(format!(
                        "image {}: instance {} score {s} outside [0, 1]",
                        self.image_id, rec.id
                    )));
                }
            }
        }
        Ok(())
    }
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate image id {}",
                    img.image_id
                )));
            }
            img.validate()?;
        }
        Ok(())
    }

    pub fn annotations(&self) -> Result<Vec<ImageAnnotation>> {
        self.images.iter().map(ImageRecord::to_annotation).collect()
    }

    /// Parses and validates manifest JSON. Schema errors carry the JSON path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let manifest: DatasetManifest =
            serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Canonical JSON: sorted keys, two-space indent, trailing newline.
    pub fn to_json(&self) -> String {
        super::canonical_json(self)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text).map_err(|e| match e {
        Error::Parse {
            path: json_path,
            message,
        } => Error::Parse {
            path: format!("{}:{}", path.display(), json_path),
            message,
        },
        other => other,
    })
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), manifest.to_json().as_bytes())
}

/// Resolves a path stored in a manifest relative to the manifest's directory.
pub fn resolve_path(manifest_path: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    manifest_path
        .parent()
        .map(|dir| dir.join(p))
        .unwrap_or_else(|| p.to_path_buf())
}
