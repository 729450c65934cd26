use crate::annotation::InstanceAnnotation;
use crate::error::{Error, Result};

use super::{greedy_match, sorted_by_id, sorted_by_score, OverlapTable};

/// IoU thresholds 0.50:0.05:0.95 expressed in percent, so comparisons stay
/// exact: `IoU ≥ t/100  ⇔  100·|∩| ≥ t·|∪|`.
pub const COCO_IOU_PERCENTS: [u64; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];

const RECALL_POINTS: u64 = 100;

/// Average precision at one IoU threshold, pooled over images.
///
/// Returns `None` when there is no ground truth at all. Uses 101-point
/// interpolation: recall levels `r/100` for `r = 0..=100`, each taking the
/// interpolated (monotone from the right) precision at the first rank whose
/// recall reaches it, or 0 if none does.
pub fn average_precision(
    images: &[(&[InstanceAnnotation], &[InstanceAnnotation])],
    iou_percent: u64,
) -> Result<Option<f64>> {
    if iou_percent == 0 || iou_percent > 100 {
        return Err(Error::invalid(format!(
            "IoU threshold {iou_percent}% outside (0, 100]"
        )));
    }
    // (score, image index, pred id, is true positive)
    let mut detections: Vec<(f64, usize, u64, bool)> = Vec::new();
    let mut n_pos = 0u64;
    for (k, (gt, pred)) in images.iter().enumerate() {
        if let Some(p) = pred.iter().find(|p| p.score.is_none()) {
            return Err(Error::invalid(format!(
                "prediction {} has no score; mAP needs scores",
                p.id
            )));
        }
        let gt = sorted_by_id(gt);
        let pred = sorted_by_score(pred);
        n_pos += gt.len() as u64;
        let table = OverlapTable::new(&gt, &pred)?;
        let matched = greedy_match(&table, gt.len(), pred.len(), |i, u| {
            100 * i >= iou_percent * u
        });
        for (p, m) in matched.iter().enumerate() {
            detections.push((pred[p].score.expect("checked"), k, pred[p].id, m.is_some()));
        }
    }
    if n_pos == 0 {
        return Ok(None);
    }
    detections.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut tp_cum = Vec::with_capacity(detections.len());
    let mut precision = Vec::with_capacity(detections.len());
    let mut tp = 0u64;
    for (rank, d) in detections.iter().enumerate() {
        if d.3 {
            tp += 1;
        }
        tp_cum.push(tp);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    let mut rank = 0usize;
    for r in 0..=RECALL_POINTS {
        // recall tp/n_pos ≥ r/100, in integers
        while rank < tp_cum.len() && tp_cum[rank] * RECALL_POINTS < r * n_pos {
            rank += 1;
        }
        if rank < tp_cum.len() {
            sum += precision[rank];
        }
    }
    Ok(Some(sum / (RECALL_POINTS + 1) as f64))
}

/// AP averaged over [`COCO_IOU_PERCENTS`]; `None` without ground truth.
pub fn mean_average_precision(
    images: &[(&[InstanceAnnotation], &[InstanceAnnotation])],
) -> Result<Option<f64>> {
    let mut total = 0.0;
    for &t in &COCO_IOU_PERCENTS {
        match average_precision(images, t)? {
            Some(ap) => total += ap,
            None => return Ok(None),
        }
    }
    Ok(Some(total / COCO_IOU_PERCENTS.len() as f64))
}
