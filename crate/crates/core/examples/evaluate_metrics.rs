//! Instance metrics on a hand-made ground truth / prediction pair.
//!
//! cargo run --example evaluate_metrics

use deoverlap::metrics::{aji, avg_dice, evaluate_dataset, f1, match_instances, EvalParams};
use deoverlap::{BitMask, CellClass, ImageAnnotation, InstanceAnnotation};

fn square(id: u64, x: usize, y: usize, side: usize) -> deoverlap::Result<InstanceAnnotation> {
    let m = BitMask::from_fn(16, 16, |px, py| {
        (x..x + side).contains(&px) && (y..y + side).contains(&py)
    });
    InstanceAnnotation::new(id, CellClass::Nuclei, m)
}

fn main() -> deoverlap::Result<()> {
    let gt = vec![square(1, 0, 0, 4)?, square(2, 8, 8, 4)?];
    let pred = vec![
        square(1, 1, 0, 4)?.with_score(0.9)?, // shifted by one column: IoU 12/20
        square(2, 8, 8, 4)?.with_score(0.8)?,
        square(3, 12, 0, 3)?.with_score(0.3)?, // false positive
    ];

    let m = match_instances(&gt, &pred, 0.5)?;
    println!(
        "pairs {:?}, unmatched gt {:?}, unmatched pred {:?}",
        m.pairs, m.unmatched_gt, m.unmatched_pred
    );
    println!("AJI  {:.4}", aji(&gt, &pred)?);
    println!("Dice {:.4}", avg_dice(&gt, &pred)?);
    println!("F1   {:.4}", f1(&gt, &pred, 0.5)?);

    let gt_img = ImageAnnotation::new("a", 16, 16, gt)?;
    let pred_img = ImageAnnotation::new("a", 16, 16, pred)?;
    let report = evaluate_dataset(&[gt_img], &[pred_img], &EvalParams::default())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serialises")
    );
    Ok(())
}
