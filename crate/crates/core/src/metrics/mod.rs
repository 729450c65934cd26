//! Instance segmentation metrics: AJI, average Dice, F1, mAP, TPp and FNo.
//!
//! Tie-breaks are fixed so results never depend on list order: ground truth is
//! visited by ascending id, predictions by descending score then ascending id,
//! and equal IoUs resolve to the lower id.

mod ap;
mod report;

pub use ap::{average_precision, mean_average_precision, COCO_IOU_PERCENTS};
pub use report::{
    evaluate_dataset, evaluate_image, ClassMetrics, DiceMode, EvalParams, MetricsReport,
};

use crate::annotation::InstanceAnnotation;
use crate::error::{Error, Result};
use crate::raster::BitMask;

/// Greedy one-to-one assignment between ground truth and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(gt id, pred id, IoU)` in matching order.
    pub pairs: Vec<(u64, u64, f64)>,
    pub unmatched_gt: Vec<u64>,
    pub unmatched_pred: Vec<u64>,
}

/// Intersection and union areas for every (gt, pred) pair, `[gt][pred]`.
pub(crate) struct OverlapTable {
    inter: Vec<Vec<u64>>,
    union: Vec<Vec<u64>>,
}

impl OverlapTable {
    pub(crate) fn new(gt: &[&InstanceAnnotation], pred: &[&InstanceAnnotation]) -> Result<Self> {
        let mut inter = vec![vec![0; pred.len()]; gt.len()];
        let mut union = vec![vec![0; pred.len()]; gt.len()];
        for (g, gi) in gt.iter().enumerate() {
            for (p, pi) in pred.iter().enumerate() {
                let shared = if gi.bbox().intersects(&pi.bbox()) {
                    gi.mask().intersection_area(pi.mask())?
                } else {
                    gi.mask().check_same_dims(pi.mask())?;
                    0
                };
                inter[g][p] = shared;
                union[g][p] = gi.area() + pi.area() - shared;
            }
        }
        Ok(Self { inter, union })
    }

    #[inline]
    pub(crate) fn inter(&self, g: usize, p: usize) -> u64 {
        self.inter[g][p]
    }

    #[inline]
    pub(crate) fn union(&self, g: usize, p: usize) -> u64 {
        self.union[g][p]
    }

    #[inline]
    pub(crate) fn iou(&self, g: usize, p: usize) -> f64 {
        self.inter[g][p] as f64 / self.union[g][p] as f64
    }
}

pub(crate) fn sorted_by_id(items: &[InstanceAnnotation]) -> Vec<&InstanceAnnotation> {
    let mut v: Vec<_> = items.iter().collect();
    v.sort_by_key(|i| i.id);
    v
}

/// Predictions ordered by descending score, then ascending id. Missing scores sort last.
pub(crate) fn sorted_by_score(items: &[InstanceAnnotation]) -> Vec<&InstanceAnnotation> {
    let mut v: Vec<_> = items.iter().collect();
    v.sort_by(|a, b| {
        let (sa, sb) = (
            a.score.unwrap_or(f64::NEG_INFINITY),
            b.score.unwrap_or(f64::NEG_INFINITY),
        );
        sb.total_cmp(&sa).then(a.id.cmp(&b.id))
    });
    v
}

/// Core greedy matcher: returns `matched[p] = Some(g)` over the given orders.
pub(crate) fn greedy_match(
    table: &OverlapTable,
    n_gt: usize,
    n_pred: usize,
    accept: impl Fn(u64, u64) -> bool,
) -> Vec<Option<usize>> {
    let mut gt_taken = vec![false; n_gt];
    let mut matched = vec![None; n_pred];
    for (p, slot) in matched.iter_mut().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for g in (0..n_gt).filter(|&g| !gt_taken[g]) {
            let (i, u) = (table.inter(g, p), table.union(g, p));
            if i == 0 || !accept(i, u) {
                continue;
            }
            let iou = table.iou(g, p);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            *slot = Some(g);
        }
    }
    matched
}

/// Each prediction, by descending score, takes the unmatched ground truth
/// with the highest IoU, provided that IoU is at least `iou_threshold`.
pub fn match_instances(
    gt: &[InstanceAnnotation],
    pred: &[InstanceAnnotation],
    iou_threshold: f64,
) -> Result<MatchResult> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    let gt = sorted_by_id(gt);
    let pred = sorted_by_score(pred);
    let table = OverlapTable::new(&gt, &pred)?;
    let matched = greedy_match(&table, gt.len(), pred.len(), |i, u| {
        i as f64 / u as f64 >= iou_threshold
    });

    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut unmatched_pred = Vec::new();
    for (p, m) in matched.iter().enumerate() {
        match m {
            Some(g) => {
                gt_used[*g] = true;
                pairs.push((gt[*g].id, pred[p].id, table.iou(*g, p)));
            }
            None => unmatched_pred.push(pred[p].id),
        }
    }
    unmatched_pred.sort_unstable();
    let unmatched_gt = gt
        .iter()
        .zip(&gt_used)
        .filter(|(_, used)| !**used)
        .map(|(g, _)| g.id)
        .collect();
    Ok(MatchResult {
        pairs,
        unmatched_gt,
        unmatched_pred,
    })
}

fn require_gt(gt: &[InstanceAnnotation], metric: &str) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "{metric} needs at least one ground-truth instance"
        )));
    }
    Ok(())
}

/// Aggregated Jaccard index with single-use predictions.
///
/// Ground truth is visited by ascending id; each takes the unused prediction
/// with the highest IoU (lowest id on ties) and adds its intersection to `C`
/// and union to `U`. A ground truth with no overlapping unused prediction adds
/// only its own area to `U`. Unused predictions add their area to `U`.
pub fn aji(gt: &[InstanceAnnotation], pred: &[InstanceAnnotation]) -> Result<f64> {
    require_gt(gt, "AJI")?;
    let gt = sorted_by_id(gt);
    let pred = sorted_by_id(pred);
    let table = OverlapTable::new(&gt, &pred)?;
    let mut used = vec![false; pred.len()];
    let (mut c, mut u) = (0u64, 0u64);
    for (g, gi) in gt.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for p in (0..pred.len()).filter(|&p| !used[p] && table.inter(g, p) > 0) {
            let iou = table.iou(g, p);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        match best {
            Some((p, _)) => {
                used[p] = true;
                c += table.inter(g, p);
                u += table.union(g, p);
            }
            None => u += gi.area(),
        }
    }
    u += pred
        .iter()
        .zip(&used)
        .filter(|(_, used)| !**used)
        .map(|(p, _)| p.area())
        .sum::<u64>();
    Ok(c as f64 / u as f64)
}

/// Mean over ground truth of the Dice score with its best-IoU prediction.
pub fn avg_dice(gt: &[InstanceAnnotation], pred: &[InstanceAnnotation]) -> Result<f64> {
    require_gt(gt, "Dice")?;
    let gt = sorted_by_id(gt);
    let pred = sorted_by_id(pred);
    let table = OverlapTable::new(&gt, &pred)?;
    let mut total = 0.0;
    for (g, gi) in gt.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for p in (0..pred.len()).filter(|&p| table.inter(g, p) > 0) {
            let iou = table.iou(g, p);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((p, iou));
            }
        }
        if let Some((p, _)) = best {
            total += dice_from_areas(table.inter(g, p), gi.area(), pred[p].area());
        }
    }
    Ok(total / gt.len() as f64)
}

#[inline]
pub(crate) fn dice_from_areas(inter: u64, a: u64, b: u64) -> f64 {
    2.0 * inter as f64 / (a + b) as f64
}

/// Detection counts behind F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionCounts {
    pub tp: u64,
    pub n_gt: u64,
    pub n_pred: u64,
}

impl DetectionCounts {
    pub fn add(&mut self, other: DetectionCounts) {
        self.tp += other.tp;
        self.n_gt += other.n_gt;
        self.n_pred += other.n_pred;
    }

    /// `2PR / (P + R)`, computed as `2·TP / (n_gt + n_pred)`; 0 when nothing matched.
    pub fn f1(&self) -> Result<f64> {
        if self.n_gt + self.n_pred == 0 {
            return Err(Error::UndefinedMetric(
                "F1 needs ground truth or predictions".into(),
            ));
        }
        Ok(2.0 * self.tp as f64 / (self.n_gt + self.n_pred) as f64)
    }
}

pub fn detection_counts(
    gt: &[InstanceAnnotation],
    pred: &[InstanceAnnotation],
    iou_threshold: f64,
) -> Result<DetectionCounts> {
    let m = match_instances(gt, pred, iou_threshold)?;
    Ok(DetectionCounts {
        tp: m.pairs.len() as u64,
        n_gt: gt.len() as u64,
        n_pred: pred.len() as u64,
    })
}

pub fn f1(
    gt: &[InstanceAnnotation],
    pred: &[InstanceAnnotation],
    iou_threshold: f64,
) -> Result<f64> {
    detection_counts(gt, pred, iou_threshold)?.f1()
}

/// Pixel-level true-positive rate `|G ∩ P| / |G|` on class-union masks.
pub fn tp_pixel(gt_union: &BitMask, pred_union: &BitMask) -> Result<f64> {
    let g = gt_union.area();
    if g == 0 {
        return Err(Error::UndefinedMetric(
            "TPp needs a non-empty ground truth".into(),
        ));
    }
    Ok(gt_union.intersection_area(pred_union)? as f64 / g as f64)
}

/// Fraction of ground-truth objects with no prediction reaching `dice_threshold`.
pub fn fn_object(
    gt: &[InstanceAnnotation],
    pred: &[InstanceAnnotation],
    dice_threshold: f64,
) -> Result<f64> {
    require_gt(gt, "FNo")?;
    let gt: Vec<_> = gt.iter().collect();
    let pred: Vec<_> = pred.iter().collect();
    let table = OverlapTable::new(&gt, &pred)?;
    let missed = gt
        .iter()
        .enumerate()
        .filter(|(g, gi)| {
            !(0..pred.len()).any(|p| {
                dice_from_areas(table.inter(*g, p), gi.area(), pred[p].area()) >= dice_threshold
            })
        })
        .count();
    Ok(missed as f64 / gt.len() as f64)
}

/// Dice of the two class-union masks.
pub fn union_dice(gt_union: &BitMask, pred_union: &BitMask) -> Result<f64> {
    let total = gt_union.area() + pred_union.area();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "union Dice of two empty masks".into(),
        ));
    }
    Ok(dice_from_areas(
        gt_union.intersection_area(pred_union)?,
        gt_union.area(),
        pred_union.area(),
    ))
}
