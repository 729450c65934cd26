//! Instance predictions summed in logit space, then used to reweight features.
//!
//! cargo run --example attention_map

use deoverlap::attention::{aggregate_attention, reweight, FeatureGrid, RoiPrediction};
use deoverlap::{BBox, ProbGrid};

fn main() -> deoverlap::Result<()> {
    let preds = vec![
        RoiPrediction {
            grid: ProbGrid::filled(2, 2, 0.9)?,
            bbox: BBox::new(0, 0, 4, 4)?,
            score: Some(0.95),
        },
        RoiPrediction {
            grid: ProbGrid::filled(1, 1, 0.8)?,
            bbox: BBox::new(2, 2, 6, 6)?,
            score: Some(0.7),
        },
    ];
    let attn = aggregate_attention(&preds, 6, 6)?;
    for y in 0..6 {
        let row: Vec<String> = (0..6).map(|x| format!("{:.3}", attn.get(x, y))).collect();
        println!("{}", row.join(" "));
    }
    // background sits at sigmoid(0) = 0.5; the overlap is reinforced
    assert_eq!(attn.get(5, 0), 0.5);
    assert!(attn.get(3, 3) > attn.get(0, 0));

    // features at half resolution: the map is resampled to 3x3
    let features = FeatureGrid::filled(3, 3, 2, 1.0)?;
    let out = reweight(&features, &attn)?;
    println!("channel 0 after reweighting: {:?}", &out.values()[..9]);
    Ok(())
}
