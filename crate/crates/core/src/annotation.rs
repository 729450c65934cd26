use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BBox, BitMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellClass {
    Nuclei,
    Cytoplasm,
}

impl CellClass {
    pub const ALL: [CellClass; 2] = [CellClass::Nuclei, CellClass::Cytoplasm];

    pub fn as_str(&self) -> &'static str {
        match self {
            CellClass::Nuclei => "nuclei",
            CellClass::Cytoplasm => "cytoplasm",
        }
    }
}

impl fmt::Display for CellClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nuclei" => Ok(CellClass::Nuclei),
            "cytoplasm" => Ok(CellClass::Cytoplasm),
            other => Err(Error::invalid(format!(
                "unknown class {other:?}, expected nuclei or cytoplasm"
            ))),
        }
    }
}

/// One annotated or predicted instance. The box is always the tight box of the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceAnnotation {
    pub id: u64,
    pub class: CellClass,
    bbox: BBox,
    mask: BitMask,
    pub score: Option<f64>,
}

impl InstanceAnnotation {
    pub fn new(id: u64, class: CellClass, mask: BitMask) -> Result<Self> {
        let bbox = mask
            .bbox()
            .ok_or_else(|| Error::invalid(format!("instance {id} has an empty mask")))?;
        Ok(Self {
            id,
            class,
            bbox,
            mask,
            score: None,
        })
    }

    pub fn with_score(mut self, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid(format!(
                "instance {} score {score} outside [0, 1]",
                self.id
            )));
        }
        self.score = Some(score);
        Ok(self)
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn mask(&self) -> &BitMask {
        &self.mask
    }

    pub fn area(&self) -> u64 {
        self.mask.area()
    }
}

/// All instances of one image; masks share the image size and ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnnotation {
    pub image_id: String,
    width: usize,
    height: usize,
    instances: Vec<InstanceAnnotation>,
}

impl ImageAnnotation {
    pub fn new(
        image_id: impl Into<String>,
        width: usize,
        height: usize,
        instances: Vec<InstanceAnnotation>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let mut seen = BTreeSet::new();
        for inst in &instances {
            if inst.mask.width() != width || inst.mask.height() != height {
                return Err(Error::invalid(format!(
                    "image {image_id}: instance {} is {}x{}, image is {width}x{height}",
                    inst.id,
                    inst.mask.width(),
                    inst.mask.height()
                )));
            }
            if !seen.insert(inst.id) {
                return Err(Error::invalid(format!(
                    "image {image_id}: duplicate instance id {}",
                    inst.id
                )));
            }
        }
        Ok(Self {
            image_id,
            width,
            height,
            instances,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn instances(&self) -> &[InstanceAnnotation] {
        &self.instances
    }

    pub fn of_class(&self, class: CellClass) -> impl Iterator<Item = &InstanceAnnotation> {
        self.instances.iter().filter(move |i| i.class == class)
    }

    /// Union of all masks of `class`.
    pub fn class_union(&self, class: CellClass) -> BitMask {
        let mut acc = BitMask::empty(self.width, self.height);
        for inst in self.of_class(class) {
            acc.union_with(&inst.mask)
                .expect("dimensions validated on construction");
        }
        acc
    }
}
