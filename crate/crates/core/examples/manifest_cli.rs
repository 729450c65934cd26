//! Writes a small manifest and drives the command line over it:
//! decompose → merge → evaluate, which must recover the ground truth.
//!
//! cargo run --example manifest_cli

use deoverlap::cli::run_command;
use deoverlap::io::{load_manifest, save_manifest, DatasetManifest, ImageRecord};
use deoverlap::metrics::MetricsReport;
use deoverlap::{BitMask, CellClass, ImageAnnotation, InstanceAnnotation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();

    let disc = |cx: f64, cy: f64, r: f64| {
        BitMask::from_fn(24, 24, |x, y| (x as f64 - cx).hypot(y as f64 - cy) <= r)
    };
    let ann = ImageAnnotation::new(
        "img0",
        24,
        24,
        vec![
            InstanceAnnotation::new(1, CellClass::Cytoplasm, disc(8.0, 10.0, 6.0))?,
            InstanceAnnotation::new(2, CellClass::Cytoplasm, disc(14.0, 12.0, 6.0))?,
            InstanceAnnotation::new(3, CellClass::Nuclei, disc(8.0, 10.0, 2.0))?,
        ],
    )?;
    let manifest = DatasetManifest {
        images: vec![ImageRecord::from_annotation(&ann, None)],
        ..DatasetManifest::default()
    };
    save_manifest(&manifest, p("gt.json"))?;

    let steps: [&[&str]; 3] = [
        &[
            "decompose",
            "--in",
            &p("gt.json"),
            "--out",
            &p("layers.json"),
        ],
        &[
            "merge",
            "--in",
            &p("layers.json"),
            "--gt",
            &p("layers.json"),
            "--out",
            &p("merged.json"),
            "--loss-out",
            &p("loss.json"),
        ],
        &[
            "evaluate",
            "--gt",
            &p("gt.json"),
            "--pred",
            &p("merged.json"),
            "--out",
            &p("report.json"),
        ],
    ];
    for args in steps {
        let code = run_command(std::iter::once("deoverlap").chain(args.iter().copied()));
        println!("deoverlap {} -> exit {code}", args[0]);
        assert_eq!(code, 0);
    }

    let layers = load_manifest(p("layers.json"))?;
    let first = &layers.images[0].instances[0];
    println!("instance 1 intersection rle: {:?}", first.intersection_rle);
    println!("loss: {}", std::fs::read_to_string(p("loss.json"))?);
    let report: MetricsReport = serde_json::from_str(&std::fs::read_to_string(p("report.json"))?)?;
    println!("average: {:?}", report.average);
    assert_eq!(
        (report.average.aji, report.average.dice, report.average.f1),
        (1.0, 1.0, 1.0)
    );
    Ok(())
}
