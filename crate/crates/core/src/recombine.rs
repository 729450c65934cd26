//! Mergence of intersection/complement predictions and the training losses.
//!
//! The merge is the probabilistic exclusive-or `p + q - 2pq` on post-sigmoid
//! values. On hard masks it is exactly logical XOR, and with `a = p - 0.5`,
//! `b = q - 0.5` it equals `0.5 - 2ab`, so thresholding at 0.5 commutes with
//! XOR wherever neither input sits exactly on 0.5.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{binarize, BBox, BitMask, ProbGrid};

/// Clamp applied to predictions inside every cross-entropy.
pub const CE_EPSILON: f64 = 1e-7;

pub fn soft_xor_merge(p_o: &ProbGrid, p_m: &ProbGrid) -> Result<ProbGrid> {
    p_o.check_same_dims(p_m)?;
    let values = p_o
        .values()
        .iter()
        .zip(p_m.values())
        .map(|(&p, &q)| (p + q - 2.0 * p * q).clamp(0.0, 1.0))
        .collect();
    ProbGrid::new(p_o.width(), p_o.height(), values)
}

/// Binarised merge of the two layer predictions.
pub fn recombine_instance(p_o: &ProbGrid, p_m: &ProbGrid, threshold: f64) -> Result<BitMask> {
    binarize(&soft_xor_merge(p_o, p_m)?, threshold)
}

#[inline]
fn bce(p: f64, q: f64) -> f64 {
    let p = p.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
    -(q * p.ln() + (1.0 - q) * (1.0 - p).ln())
}

fn mean_bce(pred: &ProbGrid, targets: impl Iterator<Item = f64>) -> Result<f64> {
    let n = pred.values().len();
    if n == 0 {
        return Err(Error::invalid("cross-entropy over an empty grid"));
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(targets)
        .map(|(&p, q)| bce(p, q))
        .sum();
    Ok(sum / n as f64)
}

/// Mean pixel-wise binary cross-entropy against a hard target.
pub fn pixel_ce(pred: &ProbGrid, target: &BitMask) -> Result<f64> {
    crate::raster::check_dims(pred.width(), pred.height(), target.width(), target.height())?;
    mean_bce(pred, target.iter().map(|b| if b { 1.0 } else { 0.0 }))
}

/// Mean pixel-wise cross-entropy against a soft target grid.
pub fn soft_pixel_ce(pred: &ProbGrid, target: &ProbGrid) -> Result<f64> {
    pred.check_same_dims(target)?;
    mean_bce(pred, target.values().iter().copied())
}

/// Classification CE for one class score, as a 1x1 pixel CE.
pub fn classification_ce(score: f64, positive: bool) -> Result<f64> {
    let pred = ProbGrid::new(1, 1, vec![score])?;
    let target = if positive {
        BitMask::full(1, 1)
    } else {
        BitMask::empty(1, 1)
    };
    pixel_ce(&pred, &target)
}

/// Sum over the four coordinates of the smooth-L1 penalty on `pred - target`.
pub fn smooth_l1(pred: [f64; 4], target: [f64; 4]) -> Result<f64> {
    if pred.iter().chain(&target).any(|v| !v.is_finite()) {
        return Err(Error::invalid("smooth-L1 inputs must be finite"));
    }
    Ok(pred
        .iter()
        .zip(&target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < 1.0 {
                0.5 * d * d
            } else {
                d - 0.5
            }
        })
        .sum())
}

/// Box regression offsets of `pred` relative to `reference`:
/// centre shift over size, then log size ratio.
pub fn box_deltas(pred: BBox, reference: BBox) -> [f64; 4] {
    let (pw, ph) = (pred.width() as f64, pred.height() as f64);
    let (rw, rh) = (reference.width() as f64, reference.height() as f64);
    let pcx = pred.x_min as f64 + 0.5 * pw;
    let pcy = pred.y_min as f64 + 0.5 * ph;
    let rcx = reference.x_min as f64 + 0.5 * rw;
    let rcy = reference.y_min as f64 + 0.5 * rh;
    [
        (pcx - rcx) / rw,
        (pcy - rcy) / rh,
        (pw / rw).ln(),
        (ph / rh).ln(),
    ]
}

/// Cross-entropy of the refined mask against the merged layer predictions.
pub fn consistency_loss(refined: &ProbGrid, p_o: &ProbGrid, p_m: &ProbGrid) -> Result<f64> {
    refined.check_same_dims(p_o)?;
    let merged = soft_xor_merge(p_o, p_m)?;
    soft_pixel_ce(refined, &merged)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    #[serde(default = "one")]
    pub lambda_dec: f64,
    #[serde(default = "one")]
    pub lambda_rmask: f64,
    #[serde(default = "one")]
    pub lambda_cons: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dec: 1.0,
            lambda_rmask: 1.0,
            lambda_cons: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_dec: f64, lambda_rmask: f64, lambda_cons: f64) -> Result<Self> {
        let w = Self {
            lambda_dec,
            lambda_rmask,
            lambda_cons,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_dec", self.lambda_dec),
            ("lambda_rmask", self.lambda_rmask),
            ("lambda_cons", self.lambda_cons),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoarseLoss {
    pub reg: f64,
    pub cls: f64,
    pub cmask: f64,
}

impl CoarseLoss {
    pub fn sum(&self) -> f64 {
        self.reg + self.cls + self.cmask
    }
}

/// Unweighted loss terms fed into [`total_loss`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub coarse: CoarseLoss,
    pub dec: f64,
    pub rmask: f64,
    pub cons: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub coarse: CoarseLoss,
    pub dec: f64,
    pub rmask: f64,
    pub cons: f64,
    pub total: f64,
}

/// `coarse + λ_dec·dec + λ_rmask·rmask + λ_cons·cons`.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    let c = &parts.coarse;
    for (name, v) in [
        ("reg", c.reg),
        ("cls", c.cls),
        ("cmask", c.cmask),
        ("dec", parts.dec),
        ("rmask", parts.rmask),
        ("cons", parts.cons),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!(
                "loss part {name} must be finite and >= 0, got {v}"
            )));
        }
    }
    let total = c.sum()
        + weights.lambda_dec * parts.dec
        + weights.lambda_rmask * parts.rmask
        + weights.lambda_cons * parts.cons;
    Ok(LossBreakdown {
        coarse: *c,
        dec: parts.dec,
        rmask: parts.rmask,
        cons: parts.cons,
        total,
    })
}

/// Predictions and targets for one instance, all on the same grid.
#[derive(Debug, Clone)]
pub struct InstanceLossInput {
    pub p_o: ProbGrid,
    pub p_m: ProbGrid,
    pub refined: ProbGrid,
    pub instance: BitMask,
    pub intersection: BitMask,
    pub complement: BitMask,
}

/// Mask-level terms `(dec, rmask, cons)`: instance means per image, then
/// the mean over images. Images without instances do not contribute.
pub fn mask_losses(images: &[Vec<InstanceLossInput>]) -> Result<(f64, f64, f64)> {
    let mut acc = (0.0, 0.0, 0.0);
    let mut counted = 0usize;
    for instances in images.iter().filter(|v| !v.is_empty()) {
        let mut img = (0.0, 0.0, 0.0);
        for s in instances {
            img.0 += pixel_ce(&s.p_o, &s.intersection)? + pixel_ce(&s.p_m, &s.complement)?;
            img.1 += pixel_ce(&s.refined, &s.instance)?;
            img.2 += consistency_loss(&s.refined, &s.p_o, &s.p_m)?;
        }
        let n = instances.len() as f64;
        acc.0 += img.0 / n;
        acc.1 += img.1 / n;
        acc.2 += img.2 / n;
        counted += 1;
    }
    if counted == 0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let k = counted as f64;
    Ok((acc.0 / k, acc.1 / k, acc.2 / k))
}
