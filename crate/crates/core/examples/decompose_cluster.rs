//! Two overlapping squares split into intersection and complement layers.
//!
//! cargo run --example decompose_cluster

use deoverlap::decompose::decompose_image;
use deoverlap::{BitMask, CellClass, ImageAnnotation, InstanceAnnotation};

fn show(name: &str, m: &BitMask) {
    println!("{name}:");
    for y in 0..m.height() {
        let row: String = (0..m.width())
            .map(|x| if m.get(x, y) { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
}

fn main() -> deoverlap::Result<()> {
    let a = BitMask::from_fn(8, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y));
    let b = BitMask::from_fn(8, 6, |x, y| (3..7).contains(&x) && (2..6).contains(&y));
    let ann = ImageAnnotation::new(
        "pair",
        8,
        6,
        vec![
            InstanceAnnotation::new(1, CellClass::Cytoplasm, a)?,
            InstanceAnnotation::new(2, CellClass::Cytoplasm, b)?,
        ],
    )?;

    let dec = decompose_image(&ann, CellClass::Cytoplasm);
    for (id, layers) in &dec.layers {
        show(&format!("instance {id} intersection"), &layers.intersection);
        show(&format!("instance {id} complement"), &layers.complement);
        // the layers partition the instance
        assert_eq!(
            &layers.instance(),
            ann.instances()[(*id - 1) as usize].mask()
        );
    }
    println!("clusters: {:?}", dec.graph.clusters());
    for (a, b, w) in dec.graph.edges() {
        println!("edge {a}-{b}: {w} shared pixels");
    }
    Ok(())
}
