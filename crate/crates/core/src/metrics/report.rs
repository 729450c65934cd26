use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{CellClass, ImageAnnotation, InstanceAnnotation};
use crate::error::{Error, Result};

use super::{
    aji, avg_dice, detection_counts, fn_object, mean_average_precision, tp_pixel, union_dice,
    DetectionCounts,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiceMode {
    /// Mean over ground-truth instances.
    #[default]
    Instance,
    /// Dice of the class-union masks.
    Union,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// IoU needed for an F1 true positive.
    pub iou_threshold: f64,
    /// Pairwise Dice needed for an object to count as detected in FNo.
    pub fno_dice_threshold: f64,
    pub dice_mode: DiceMode,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            fno_dice_threshold: 0.7,
            dice_mode: DiceMode::Instance,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_threshold", self.iou_threshold),
            ("fno_dice_threshold", self.fno_dice_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(format!("{name} {v} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// One row of the report. `map` is `None` when predictions carry no scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub map: Option<f64>,
    pub dice: f64,
    pub f1: f64,
    pub aji: f64,
    pub tpp: f64,
    pub fno: f64,
}

impl ClassMetrics {
    /// Values ×100 as printed in result tables; TPp and FNo stay fractions.
    pub fn as_percent(&self) -> ClassMetrics {
        ClassMetrics {
            map: self.map.map(|v| v * 100.0),
            dice: self.dice * 100.0,
            f1: self.f1 * 100.0,
            aji: self.aji * 100.0,
            tpp: self.tpp,
            fno: self.fno,
        }
    }
}

/// Per-class metrics plus their mean. Serialises as
/// `{"<class>": {...}, "average": {...}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: BTreeMap<CellClass, ClassMetrics>,
    pub average: ClassMetrics,
}

impl Serialize for MetricsReport {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let mut map: BTreeMap<&str, &ClassMetrics> =
            self.classes.iter().map(|(c, m)| (c.as_str(), m)).collect();
        map.insert("average", &self.average);
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MetricsReport {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let mut raw: BTreeMap<String, ClassMetrics> = BTreeMap::deserialize(deserializer)?;
        let average = raw
            .remove("average")
            .ok_or_else(|| serde::de::Error::missing_field("average"))?;
        let classes = raw
            .into_iter()
            .map(|(k, v)| {
                k.parse::<CellClass>()
                    .map(|c| (c, v))
                    .map_err(serde::de::Error::custom)
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(MetricsReport { classes, average })
    }
}

/// Per-image values for one class; `None` where the image has no ground truth of that class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageClassMetrics {
    pub aji: Option<f64>,
    pub dice: Option<f64>,
    pub tpp: Option<f64>,
    pub fno: Option<f64>,
    pub counts: DetectionCounts,
}

pub fn evaluate_image(
    gt: &ImageAnnotation,
    pred: &ImageAnnotation,
    class: CellClass,
    params: &EvalParams,
) -> Result<ImageClassMetrics> {
    if gt.width() != pred.width() || gt.height() != pred.height() {
        return Err(Error::invalid(format!(
            "image {}: ground truth is {}x{}, prediction is {}x{}",
            gt.image_id,
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        )));
    }
    let g: Vec<InstanceAnnotation> = gt.of_class(class).cloned().collect();
    let p: Vec<InstanceAnnotation> = pred.of_class(class).cloned().collect();
    let counts = if g.is_empty() && p.is_empty() {
        DetectionCounts::default()
    } else {
        detection_counts(&g, &p, params.iou_threshold)?
    };
    if g.is_empty() {
        return Ok(ImageClassMetrics {
            aji: None,
            dice: None,
            tpp: None,
            fno: None,
            counts,
        });
    }
    let (gu, pu) = (gt.class_union(class), pred.class_union(class));
    let dice = match params.dice_mode {
        DiceMode::Instance => avg_dice(&g, &p)?,
        DiceMode::Union => union_dice(&gu, &pu)?,
    };
    Ok(ImageClassMetrics {
        aji: Some(aji(&g, &p)?),
        dice: Some(dice),
        tpp: Some(tp_pixel(&gu, &pu)?),
        fno: Some(fn_object(&g, &p, params.fno_dice_threshold)?),
        counts,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Dataset report. AJI, Dice, TPp and FNo are averaged over images holding
/// ground truth of the class; F1 pools detection counts over all images; mAP
/// pools detections COCO-style. Images are paired by id and reduced in id
/// order, so the result does not depend on thread scheduling.
pub fn evaluate_dataset(
    gt: &[ImageAnnotation],
    pred: &[ImageAnnotation],
    params: &EvalParams,
) -> Result<MetricsReport> {
    params.validate()?;
    let mut pred_by_id: BTreeMap<&str, &ImageAnnotation> = BTreeMap::new();
    for p in pred {
        if pred_by_id.insert(p.image_id.as_str(), p).is_some() {
            return Err(Error::invalid(format!(
                "duplicate prediction image {}",
                p.image_id
            )));
        }
    }
    let mut gt_sorted: Vec<&ImageAnnotation> = gt.iter().collect();
    gt_sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    for w in gt_sorted.windows(2) {
        if w[0].image_id == w[1].image_id {
            return Err(Error::invalid(format!(
                "duplicate ground-truth image {}",
                w[0].image_id
            )));
        }
    }
    for id in pred_by_id.keys() {
        if gt_sorted
            .binary_search_by(|g| g.image_id.as_str().cmp(id))
            .is_err()
        {
            log::warn!("prediction image {id} has no ground truth; ignored");
        }
    }
    let empties: Vec<ImageAnnotation> = gt_sorted
        .iter()
        .map(|g| ImageAnnotation::new(g.image_id.clone(), g.width(), g.height(), Vec::new()))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&ImageAnnotation, &ImageAnnotation)> = gt_sorted
        .iter()
        .zip(&empties)
        .map(|(g, empty)| {
            (
                *g,
                pred_by_id
                    .get(g.image_id.as_str())
                    .copied()
                    .unwrap_or(empty),
            )
        })
        .collect();

    let mut classes = BTreeMap::new();
    for class in CellClass::ALL {
        if !pairs
            .iter()
            .any(|(g, _)| g.of_class(class).next().is_some())
        {
            continue;
        }
        let per_image: Vec<ImageClassMetrics> = pairs
            .par_iter()
            .map(|(g, p)| evaluate_image(g, p, class, params))
            .collect::<Result<_>>()?;
        let mut counts = DetectionCounts::default();
        per_image.iter().for_each(|m| counts.add(m.counts));

        let class_lists: Vec<(Vec<InstanceAnnotation>, Vec<InstanceAnnotation>)> = pairs
            .iter()
            .map(|(g, p)| {
                (
                    g.of_class(class).cloned().collect(),
                    p.of_class(class).cloned().collect(),
                )
            })
            .collect();
        let map = if class_lists
            .iter()
            .all(|(_, p)| p.iter().all(|i| i.score.is_some()))
        {
            let refs: Vec<(&[InstanceAnnotation], &[InstanceAnnotation])> = class_lists
                .iter()
                .map(|(g, p)| (g.as_slice(), p.as_slice()))
                .collect();
            mean_average_precision(&refs)?
        } else {
            log::warn!("{class}: predictions without scores, mAP not reported");
            None
        };

        let with_gt = || per_image.iter().filter(|m| m.aji.is_some());
        classes.insert(
            class,
            ClassMetrics {
                map,
                dice: mean(with_gt().map(|m| m.dice.unwrap())),
                f1: counts.f1()?,
                aji: mean(with_gt().map(|m| m.aji.unwrap())),
                tpp: mean(with_gt().map(|m| m.tpp.unwrap())),
                fno: mean(with_gt().map(|m| m.fno.unwrap())),
            },
        );
    }
    if classes.is_empty() {
        return Err(Error::UndefinedMetric(
            "no ground-truth instances in any image".into(),
        ));
    }
    let rows: Vec<&ClassMetrics> = classes.values().collect();
    let average = ClassMetrics {
        map: rows
            .iter()
            .map(|m| m.map)
            .sum::<Option<f64>>()
            .map(|s| s / rows.len() as f64),
        dice: mean(rows.iter().map(|m| m.dice)),
        f1: mean(rows.iter().map(|m| m.f1)),
        aji: mean(rows.iter().map(|m| m.aji)),
        tpp: mean(rows.iter().map(|m| m.tpp)),
        fno: mean(rows.iter().map(|m| m.fno)),
    };
    Ok(MetricsReport { classes, average })
}
