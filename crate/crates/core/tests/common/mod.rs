//! Brute-force reference implementations and random scene builders shared by
//! the integration tests. Everything here works on plain `Vec<bool>` pixels
//! and exact integer comparisons, independent of the library internals.

#![allow(dead_code)]

use deoverlap::{BitMask, CellClass, ImageAnnotation, InstanceAnnotation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A plain instance: row-major pixels, no bit packing.
#[derive(Debug, Clone)]
pub struct Inst {
    pub id: u64,
    pub class: CellClass,
    pub px: Vec<bool>,
    pub score: Option<f64>,
}

impl Inst {
    pub fn area(&self) -> u64 {
        self.px.iter().filter(|&&b| b).count() as u64
    }

    pub fn to_annotation(&self, w: usize, h: usize) -> InstanceAnnotation {
        let inst = InstanceAnnotation::new(
            self.id,
            self.class,
            BitMask::from_bools(w, h, &self.px).unwrap(),
        )
        .unwrap();
        match self.score {
            Some(s) => inst.with_score(s).unwrap(),
            None => inst,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub id: String,
    pub w: usize,
    pub h: usize,
    pub gt: Vec<Inst>,
    pub pred: Vec<Inst>,
}

impl Scene {
    pub fn gt_annotation(&self) -> ImageAnnotation {
        ImageAnnotation::new(
            self.id.clone(),
            self.w,
            self.h,
            self.gt
                .iter()
                .map(|i| i.to_annotation(self.w, self.h))
                .collect(),
        )
        .unwrap()
    }

    pub fn pred_annotation(&self) -> ImageAnnotation {
        ImageAnnotation::new(
            self.id.clone(),
            self.w,
            self.h,
            self.pred
                .iter()
                .map(|i| i.to_annotation(self.w, self.h))
                .collect(),
        )
        .unwrap()
    }
}

fn inter(a: &[bool], b: &[bool]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u64
}

/// Random rectangle or ellipse, never empty.
pub fn random_shape(r: &mut impl Rng, w: usize, h: usize) -> Vec<bool> {
    loop {
        let x0 = r.random_range(0..w);
        let y0 = r.random_range(0..h);
        let x1 = r.random_range(x0 + 1..=w.min(x0 + 1 + w / 2));
        let y1 = r.random_range(y0 + 1..=h.min(y0 + 1 + h / 2));
        let ellipse = r.random_bool(0.5);
        let (cx, cy) = ((x0 + x1) as f64 / 2.0, (y0 + y1) as f64 / 2.0);
        let (rx, ry) = ((x1 - x0) as f64 / 2.0, (y1 - y0) as f64 / 2.0);
        let px: Vec<bool> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                let inside = (x0..x1).contains(&x) && (y0..y1).contains(&y);
                if ellipse {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    inside && dx * dx + dy * dy <= 1.0
                } else {
                    inside
                }
            })
            .collect();
        if px.iter().any(|&b| b) {
            return px;
        }
    }
}

/// Shift by (dx, dy), clipping at the border.
pub fn shift(px: &[bool], w: usize, h: usize, dx: isize, dy: isize) -> Vec<bool> {
    (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as isize - dx, (i / w) as isize - dy);
            x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < h
                && px[y as usize * w + x as usize]
        })
        .collect()
}

pub fn random_class(r: &mut impl Rng) -> CellClass {
    if r.random_bool(0.5) {
        CellClass::Nuclei
    } else {
        CellClass::Cytoplasm
    }
}

/// Ground truth with up to `max_gt` instances of random class.
pub fn random_gt(r: &mut impl Rng, w: usize, h: usize, max_gt: usize) -> Vec<Inst> {
    let n = r.random_range(0..=max_gt);
    (0..n)
        .map(|k| Inst {
            id: k as u64 + 1,
            class: random_class(r),
            px: random_shape(r, w, h),
            score: None,
        })
        .collect()
}

fn pick_score(r: &mut impl Rng) -> f64 {
    [0.25, 0.5, 0.75, 1.0][r.random_range(0..4)]
}

/// A 16×16 evaluation scene: predictions are jittered, dropped, duplicated or spurious.
/// Scores come from a small set so ties actually happen.
pub fn random_scene(r: &mut impl Rng, idx: usize) -> Scene {
    let (w, h) = (16, 16);
    let gt = random_gt(r, w, h, 5);
    let mut pred = Vec::new();
    let mut next_id = 1u64;
    for g in &gt {
        let roll: f64 = r.random();
        if roll < 0.15 {
            continue;
        }
        let copies = if roll > 0.9 { 2 } else { 1 };
        for _ in 0..copies {
            let px = shift(
                &g.px,
                w,
                h,
                r.random_range(-2i32..=2) as isize,
                r.random_range(-2i32..=2) as isize,
            );
            if px.iter().any(|&b| b) {
                pred.push(Inst {
                    id: next_id,
                    class: if r.random_bool(0.9) {
                        g.class
                    } else {
                        random_class(r)
                    },
                    px,
                    score: Some(pick_score(r)),
                });
                next_id += 1;
            }
        }
    }
    for _ in 0..r.random_range(0..=2) {
        pred.push(Inst {
            id: next_id,
            class: random_class(r),
            px: random_shape(r, w, h),
            score: Some(pick_score(r)),
        });
        next_id += 1;
    }
    // ids in scrambled order so nothing relies on input order
    let n = pred.len();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        pred.swap(i, j);
    }
    Scene {
        id: format!("scene{idx:04}"),
        w,
        h,
        gt,
        pred,
    }
}

// --- decomposition --------------------------------------------------------

/// `(intersection, complement)` for every instance, by direct pixel counting.
pub fn brute_decompose(insts: &[Inst]) -> Vec<(u64, Vec<bool>, Vec<bool>)> {
    insts
        .iter()
        .map(|e| {
            let o: Vec<bool> = (0..e.px.len())
                .map(|p| {
                    e.px[p]
                        && insts
                            .iter()
                            .any(|f| f.id != e.id && f.class == e.class && f.px[p])
                })
                .collect();
            let m = e.px.iter().zip(&o).map(|(a, b)| *a && !*b).collect();
            (e.id, o, m)
        })
        .collect()
}

/// Union over same-class pairs of their intersections.
pub fn pairwise_overlap_union(insts: &[&Inst], len: usize) -> Vec<bool> {
    let mut out = vec![false; len];
    for (i, a) in insts.iter().enumerate() {
        for b in &insts[i + 1..] {
            for ((o, &x), &y) in out.iter_mut().zip(&a.px).zip(&b.px) {
                *o |= x && y;
            }
        }
    }
    out
}

// --- metrics --------------------------------------------------------------

/// `a/b > c/d` for non-negative integers with positive denominators.
fn frac_gt(a: u64, b: u64, c: u64, d: u64) -> bool {
    (a as u128) * (d as u128) > (c as u128) * (b as u128)
}

fn by_id(v: &[Inst]) -> Vec<&Inst> {
    let mut out: Vec<&Inst> = v.iter().collect();
    out.sort_by_key(|i| i.id);
    out
}

fn by_score(v: &[Inst]) -> Vec<&Inst> {
    let mut out: Vec<&Inst> = v.iter().collect();
    out.sort_by(|a, b| {
        b.score
            .unwrap()
            .partial_cmp(&a.score.unwrap())
            .unwrap()
            .then(a.id.cmp(&b.id))
    });
    out
}

pub fn oracle_aji(gt: &[Inst], pred: &[Inst]) -> f64 {
    let gt = by_id(gt);
    let pred = by_id(pred);
    let mut used = vec![false; pred.len()];
    let (mut c, mut u) = (0u64, 0u64);
    for g in &gt {
        let mut best: Option<(usize, u64, u64)> = None;
        for (k, p) in pred.iter().enumerate() {
            let i = inter(&g.px, &p.px);
            if used[k] || i == 0 {
                continue;
            }
            let un = g.area() + p.area() - i;
            if best.is_none_or(|(_, bi, bu)| frac_gt(i, un, bi, bu)) {
                best = Some((k, i, un));
            }
        }
        match best {
            Some((k, i, un)) => {
                used[k] = true;
                c += i;
                u += un;
            }
            None => u += g.area(),
        }
    }
    for (k, p) in pred.iter().enumerate() {
        if !used[k] {
            u += p.area();
        }
    }
    c as f64 / u as f64
}

pub fn oracle_dice(gt: &[Inst], pred: &[Inst]) -> f64 {
    let gt = by_id(gt);
    let pred = by_id(pred);
    let mut total = 0.0;
    for g in &gt {
        let mut best: Option<(u64, u64, u64)> = None; // (inter, union, pred area)
        for p in &pred {
            let i = inter(&g.px, &p.px);
            if i == 0 {
                continue;
            }
            let un = g.area() + p.area() - i;
            if best.is_none_or(|(bi, bu, _)| frac_gt(i, un, bi, bu)) {
                best = Some((i, un, p.area()));
            }
        }
        if let Some((i, _, pa)) = best {
            total += 2.0 * i as f64 / (g.area() + pa) as f64;
        }
    }
    total / gt.len() as f64
}

/// Greedy matching: predictions by score, each takes the free ground truth
/// with the highest IoU (lowest id on ties) meeting `100·i ≥ pct·u`.
pub fn oracle_matches(gt: &[Inst], pred: &[Inst], pct: u64) -> Vec<(u64, bool)> {
    let gt = by_id(gt);
    let mut taken = vec![false; gt.len()];
    by_score(pred)
        .into_iter()
        .map(|p| {
            let mut best: Option<(usize, u64, u64)> = None;
            for (k, g) in gt.iter().enumerate() {
                let i = inter(&g.px, &p.px);
                let un = g.area() + p.area() - i;
                if taken[k] || i == 0 || 100 * i < pct * un {
                    continue;
                }
                if best.is_none_or(|(_, bi, bu)| frac_gt(i, un, bi, bu)) {
                    best = Some((k, i, un));
                }
            }
            if let Some((k, _, _)) = best {
                taken[k] = true;
            }
            (p.id, best.is_some())
        })
        .collect()
}

pub fn oracle_tp(gt: &[Inst], pred: &[Inst]) -> u64 {
    oracle_matches(gt, pred, 50).iter().filter(|m| m.1).count() as u64
}

pub fn oracle_f1(gt: &[Inst], pred: &[Inst]) -> f64 {
    2.0 * oracle_tp(gt, pred) as f64 / (gt.len() + pred.len()) as f64
}

fn union_px(v: &[Inst], len: usize) -> Vec<bool> {
    (0..len).map(|p| v.iter().any(|i| i.px[p])).collect()
}

pub fn oracle_tpp(gt: &[Inst], pred: &[Inst], len: usize) -> f64 {
    let (g, p) = (union_px(gt, len), union_px(pred, len));
    let ga = g.iter().filter(|&&b| b).count() as u64;
    inter(&g, &p) as f64 / ga as f64
}

/// Objects whose best pairwise Dice stays below 7/10.
pub fn oracle_fno(gt: &[Inst], pred: &[Inst]) -> f64 {
    let missed = gt
        .iter()
        .filter(|g| {
            !pred
                .iter()
                .any(|p| 10 * 2 * inter(&g.px, &p.px) >= 7 * (g.area() + p.area()))
        })
        .count();
    missed as f64 / gt.len() as f64
}

/// COCO-style mAP pooled over images, which must be given in id order.
pub fn oracle_map(images: &[(Vec<Inst>, Vec<Inst>)]) -> Option<f64> {
    let n_pos: u64 = images.iter().map(|(g, _)| g.len() as u64).sum();
    if n_pos == 0 {
        return None;
    }
    let mut total = 0.0;
    for pct in (50..=95).step_by(5) {
        let mut dets: Vec<(f64, usize, u64, bool)> = Vec::new();
        for (k, (g, p)) in images.iter().enumerate() {
            let scores: std::collections::HashMap<u64, f64> =
                p.iter().map(|i| (i.id, i.score.unwrap())).collect();
            for (id, tp) in oracle_matches(g, p, pct) {
                dets.push((scores[&id], k, id, tp));
            }
        }
        dets.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut tp_cum = Vec::new();
        let mut prec = Vec::new();
        let mut tp = 0u64;
        for (rank, d) in dets.iter().enumerate() {
            tp += d.3 as u64;
            tp_cum.push(tp);
            prec.push(tp as f64 / (rank + 1) as f64);
        }
        let mut sum = 0.0;
        for r in 0..=100u64 {
            // best precision among ranks whose recall reaches r/100
            let best = (0..dets.len())
                .filter(|&k| tp_cum[k] * 100 >= r * n_pos)
                .map(|k| prec[k])
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |a| a.max(v)))
                });
            sum += best.unwrap_or(0.0);
        }
        total += sum / 101.0;
    }
    Some(total / 10.0)
}

/// Expected dataset report row for one class, following the documented
/// aggregation: per-image means over images with ground truth of the class,
/// pooled F1 counts, pooled mAP.
pub struct OracleRow {
    pub map: Option<f64>,
    pub dice: f64,
    pub f1: f64,
    pub aji: f64,
    pub tpp: f64,
    pub fno: f64,
}

pub fn oracle_report_row(scenes: &[Scene], class: CellClass) -> Option<OracleRow> {
    let mut sorted: Vec<&Scene> = scenes.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let of = |v: &[Inst]| {
        v.iter()
            .filter(|i| i.class == class)
            .cloned()
            .collect::<Vec<_>>()
    };
    let per: Vec<(Vec<Inst>, Vec<Inst>, usize)> = sorted
        .iter()
        .map(|s| (of(&s.gt), of(&s.pred), s.w * s.h))
        .collect();
    if per.iter().all(|(g, _, _)| g.is_empty()) {
        return None;
    }
    let (mut aji, mut dice, mut tpp, mut fno, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    let (mut tp, mut ng, mut np) = (0u64, 0u64, 0u64);
    for (g, p, len) in &per {
        ng += g.len() as u64;
        np += p.len() as u64;
        if !g.is_empty() {
            tp += oracle_tp(g, p);
            aji += oracle_aji(g, p);
            dice += oracle_dice(g, p);
            tpp += oracle_tpp(g, p, *len);
            fno += oracle_fno(g, p);
            n += 1;
        } else if !p.is_empty() {
            tp += oracle_tp(g, p);
        }
    }
    let k = n as f64;
    let maps: Vec<(Vec<Inst>, Vec<Inst>)> = per.into_iter().map(|(g, p, _)| (g, p)).collect();
    Some(OracleRow {
        map: oracle_map(&maps),
        dice: dice / k,
        f1: 2.0 * tp as f64 / (ng + np) as f64,
        aji: aji / k,
        tpp: tpp / k,
        fno: fno / k,
    })
}
