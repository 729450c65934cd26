//! Soft-XOR recombination of layer predictions and the full loss breakdown.
//!
//! cargo run --example merge_losses

use deoverlap::recombine::{
    box_deltas, classification_ce, consistency_loss, mask_losses, recombine_instance, smooth_l1,
    soft_xor_merge, total_loss, CoarseLoss, InstanceLossInput, LossParts, LossWeights,
};
use deoverlap::{BBox, BitMask, ProbGrid};

fn main() -> deoverlap::Result<()> {
    // 4x1 strip: pixel 0 only in the complement, 1-2 in the intersection, 3 outside
    let intersection = BitMask::from_bools(4, 1, &[false, true, true, false])?;
    let complement = BitMask::from_bools(4, 1, &[true, false, false, false])?;
    let instance = intersection.union(&complement)?;

    let p_o = ProbGrid::new(4, 1, vec![0.1, 0.9, 0.7, 0.05])?;
    let p_m = ProbGrid::new(4, 1, vec![0.8, 0.2, 0.1, 0.05])?;
    let merged = soft_xor_merge(&p_o, &p_m)?;
    println!("merged     {:?}", merged.values());
    println!(
        "binarised  {:?}",
        recombine_instance(&p_o, &p_m, 0.5)?.to_bools()
    );
    println!(
        "consistency(merged) = {:.3e}",
        consistency_loss(&merged, &p_o, &p_m)?
    );

    let (dec, rmask, cons) = mask_losses(&[vec![InstanceLossInput {
        p_o,
        p_m,
        refined: merged,
        instance,
        intersection,
        complement,
    }]])?;

    let pred_box = BBox::new(0, 0, 4, 1)?;
    let gt_box = BBox::new(0, 0, 3, 1)?;
    let coarse = CoarseLoss {
        reg: smooth_l1(box_deltas(pred_box, gt_box), [0.0; 4])?,
        cls: classification_ce(0.9, true)?,
        cmask: 0.0,
    };
    let parts = LossParts {
        coarse,
        dec,
        rmask,
        cons,
    };
    for lambda in [0.0, 1.0, 2.0] {
        let w = LossWeights::new(lambda, lambda, lambda)?;
        println!("lambda={lambda}: {:#?}", total_loss(&parts, &w)?);
    }
    Ok(())
}
