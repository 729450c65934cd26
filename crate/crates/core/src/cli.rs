//! The `deoverlap` command line: argument parsing, logging, exit codes and
//! the five batch workflows.
//!
//! Exit codes: `0` success, `1` data error (one JSON line
//! `{"error": <kind>, "message": ...}` on stderr), `2` usage error.
//! Log level comes from `DEOVERLAP_LOG` (default `warn`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::annotation::{CellClass, ImageAnnotation};
use crate::attention::{aggregate_attention, reweight, FeatureGrid, RoiPrediction};
use crate::decompose::decompose_image;
use crate::error::{Error, Result};
use crate::io::{
    canonical_json, load_manifest, load_run_config, read_prob_png, read_rgb_png, resolve_path,
    save_manifest, write_atomic, write_json, write_prob_png, write_rgb_png, DatasetManifest,
    ImageRecord, InstanceRecord, RunConfig,
};
use crate::metrics::{evaluate_dataset, DiceMode, MetricsReport};
use crate::raster::{binarize, rle_encode, BBox, BitMask, ProbGrid};
use crate::recombine::{
    box_deltas, classification_ce, mask_losses, pixel_ce, smooth_l1, soft_xor_merge, total_loss,
    CoarseLoss, InstanceLossInput, LossParts,
};
use crate::synth::{ellipse_cell, extract_cell, generate_on, tile_background, CellCrop};

pub const LOG_ENV: &str = "DEOVERLAP_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "deoverlap",
    version,
    about = "Overlapping cell instance tooling"
)]
struct Cli {
    /// Run configuration JSON (loss weights, thresholds, synthesis, jobs, seed).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Add intersection/complement layer RLEs to a ground-truth manifest.
    Decompose(DecomposeArgs),
    /// Recombine per-instance layer predictions into instance masks.
    Merge(MergeArgs),
    /// Generate synthetic overlapping clusters with exact layer ground truth.
    Synthesize(SynthesizeArgs),
    /// Build attention maps from instance predictions and reweight features.
    Attention(AttentionArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassArg {
    Nuclei,
    Cytoplasm,
}

impl From<ClassArg> for CellClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Nuclei => CellClass::Nuclei,
            ClassArg::Cytoplasm => CellClass::Cytoplasm,
        }
    }
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Only this class; both by default.
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Prediction manifest with per-instance layer PNGs or layer RLEs.
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Ground truth for the loss breakdown.
    #[arg(long, value_name = "MANIFEST")]
    gt: Option<PathBuf>,
    /// Binarisation threshold for merged probabilities.
    #[arg(long)]
    threshold: Option<f64>,
    /// Where to write the loss breakdown; stdout when omitted.
    #[arg(long, value_name = "FILE", requires = "gt")]
    loss_out: Option<PathBuf>,
    #[arg(long)]
    lambda_dec: Option<f64>,
    #[arg(long)]
    lambda_rmask: Option<f64>,
    #[arg(long)]
    lambda_cons: Option<f64>,
}

#[derive(Debug, Args)]
struct SynthesizeArgs {
    /// Manifest whose instances (with image files) form the cell bank;
    /// procedural ellipses are used when omitted.
    #[arg(long, value_name = "MANIFEST")]
    bank: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "cytoplasm")]
    class: ClassArg,
    /// Background tile PNG; the configured uniform colour otherwise.
    #[arg(long, value_name = "PNG")]
    background: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttentionArgs {
    /// Prediction manifest; instances use `refined_png`, else their RLE.
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Feature grid to reweight (needs a single selected image).
    #[arg(long, value_name = "BIN")]
    features: Option<PathBuf>,
    /// Only this image id.
    #[arg(long)]
    image: Option<String>,
    #[arg(long, value_enum, default_value = "cytoplasm")]
    class: ClassArg,
    /// Drop instances scoring below this.
    #[arg(long)]
    min_score: Option<f64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long, value_name = "MANIFEST")]
    gt: PathBuf,
    #[arg(long, value_name = "MANIFEST")]
    pred: PathBuf,
    /// Report JSON; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// IoU threshold for F1 matches.
    #[arg(long)]
    threshold: Option<f64>,
    /// Dice threshold for FNo detections.
    #[arg(long)]
    fno_dice: Option<f64>,
    #[arg(long, value_enum)]
    dice_mode: Option<DiceModeArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiceModeArg {
    Instance,
    Union,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            eprintln!("{}", error_line("usage", &e.kind().to_string()));
            return 2;
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    // a second call (tests run many commands per process) is harmless
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => load_run_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    pool.install(|| match cli.command {
        Command::Decompose(args) => cmd_decompose(args),
        Command::Merge(args) => cmd_merge(args, cfg),
        Command::Synthesize(args) => cmd_synthesize(args, cfg),
        Command::Attention(args) => cmd_attention(args),
        Command::Evaluate(args) => cmd_evaluate(args, cfg),
    })
}

fn cmd_decompose(args: DecomposeArgs) -> Result<()> {
    let manifest = load_manifest(&args.input)?;
    let classes: Vec<CellClass> = match args.class {
        Some(c) => vec![c.into()],
        None => CellClass::ALL.to_vec(),
    };
    let images = manifest
        .images
        .par_iter()
        .map(|rec| {
            let ann = rec.to_annotation()?;
            let mut out = rec.clone();
            for &class in &classes {
                let dec = decompose_image(&ann, class);
                log::debug!(
                    "{} {class}: {} instances, {} overlap edges",
                    ann.image_id,
                    dec.layers.len(),
                    dec.graph.edge_count()
                );
                out.attach_layers(&dec);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    save_manifest(
        &DatasetManifest {
            version: manifest.version,
            images,
        },
        &args.out,
    )
}

/// Full-image layer probabilities of one predicted instance, plus its RoI.
struct LayerPrediction {
    roi: BBox,
    p_o: ProbGrid,
    p_m: ProbGrid,
    refined: Option<ProbGrid>,
    coarse: Option<ProbGrid>,
}

fn roi_png(manifest_path: &Path, stored: &str, roi: BBox, w: usize, h: usize) -> Result<ProbGrid> {
    read_prob_png(&resolve_path(manifest_path, stored))?.place_in(w, h, roi)
}

fn layer_prediction(
    manifest_path: &Path,
    img: &ImageRecord,
    rec: &InstanceRecord,
) -> Result<Option<LayerPrediction>> {
    let (w, h) = (img.width, img.height);
    let context = |e: Error| match e {
        Error::InvalidInput(m) => {
            Error::invalid(format!("image {} instance {}: {m}", img.image_id, rec.id))
        }
        other => other,
    };
    let (p_o, p_m, roi) = match (&rec.intersection_png, &rec.complement_png) {
        (Some(o), Some(m)) => {
            let roi = rec
                .bbox()?
                .ok_or_else(|| Error::invalid("layer PNGs need a bbox"))
                .map_err(context)?;
            (
                roi_png(manifest_path, o, roi, w, h)?,
                roi_png(manifest_path, m, roi, w, h)?,
                roi,
            )
        }
        (None, None) => match (rec.intersection_mask(w, h)?, rec.complement_mask(w, h)?) {
            (Some(o), Some(m)) => {
                let roi = match rec.bbox()? {
                    Some(b) => b,
                    None => match o.union(&m)?.bbox() {
                        Some(b) => b,
                        None => return Ok(None),
                    },
                };
                (ProbGrid::from_mask(&o), ProbGrid::from_mask(&m), roi)
            }
            (None, None) => return Ok(None),
            _ => {
                return Err(context(Error::invalid(
                    "only one of intersection_rle/complement_rle given",
                )))
            }
        },
        _ => {
            return Err(context(Error::invalid(
                "only one of intersection_png/complement_png given",
            )))
        }
    };
    let refined = rec
        .refined_png
        .as_deref()
        .map(|p| roi_png(manifest_path, p, roi, w, h))
        .transpose()?;
    let coarse = rec
        .coarse_png
        .as_deref()
        .map(|p| roi_png(manifest_path, p, roi, w, h))
        .transpose()?;
    Ok(Some(LayerPrediction {
        roi,
        p_o,
        p_m,
        refined,
        coarse,
    }))
}

/// Ground truth of one instance: full mask and its two layers.
struct GtInstance {
    bbox: BBox,
    instance: BitMask,
    intersection: BitMask,
    complement: BitMask,
}

fn gt_instances(rec: &ImageRecord) -> Result<std::collections::BTreeMap<u64, GtInstance>> {
    let ann = rec.to_annotation()?;
    let mut out = std::collections::BTreeMap::new();
    let decomps: Vec<_> = CellClass::ALL
        .iter()
        .map(|&c| decompose_image(&ann, c))
        .collect();
    for (inst, stored) in ann.instances().iter().zip(&rec.instances) {
        // stored layers win over recomputed ones
        let (intersection, complement) = match (
            stored.intersection_mask(rec.width, rec.height)?,
            stored.complement_mask(rec.width, rec.height)?,
        ) {
            (Some(o), Some(m)) => (o, m),
            _ => {
                let layers = decomps
                    .iter()
                    .find_map(|d| d.get(inst.id))
                    .expect("every instance belongs to one class decomposition");
                (layers.intersection.clone(), layers.complement.clone())
            }
        };
        out.insert(
            inst.id,
            GtInstance {
                bbox: inst.bbox(),
                instance: inst.mask().clone(),
                intersection,
                complement,
            },
        );
    }
    Ok(out)
}

struct MergedImage {
    record: ImageRecord,
    losses: Vec<InstanceLossInput>,
    coarse: Vec<CoarseLoss>,
}

fn merge_image(
    manifest_path: &Path,
    img: &ImageRecord,
    gt: Option<&ImageRecord>,
    threshold: f64,
) -> Result<MergedImage> {
    let gt = gt.map(gt_instances).transpose()?;
    let mut record = ImageRecord {
        image_id: img.image_id.clone(),
        file_path: img.file_path.clone(),
        width: img.width,
        height: img.height,
        instances: Vec::new(),
    };
    let mut losses = Vec::new();
    let mut coarse = Vec::new();
    for rec in &img.instances {
        let Some(pred) = layer_prediction(manifest_path, img, rec)? else {
            // nothing to merge: keep the instance as it is
            record.instances.push(rec.clone());
            continue;
        };
        let merged = soft_xor_merge(&pred.p_o, &pred.p_m)?;
        let mask = binarize(&merged, threshold)?;
        match mask.bbox() {
            Some(b) => record.instances.push(InstanceRecord {
                bbox: Some(b.to_array()),
                rle: Some(rle_encode(&mask)),
                score: rec.score,
                ..InstanceRecord::new(rec.id, rec.class)
            }),
            None => log::warn!(
                "{}: instance {} merges to an empty mask; dropped",
                img.image_id,
                rec.id
            ),
        }

        let Some(gt) = &gt else { continue };
        let Some(target) = gt.get(&rec.id) else {
            log::warn!(
                "{}: instance {} has no ground truth; no loss",
                img.image_id,
                rec.id
            );
            continue;
        };
        let roi = pred.roi;
        let refined = pred.refined.unwrap_or(merged);
        let crop = |g: &ProbGrid| g.crop(roi);
        let coarse_grid = match &pred.coarse {
            Some(c) => crop(c)?,
            None => crop(&refined)?,
        };
        let instance = target.instance.crop(roi)?;
        coarse.push(CoarseLoss {
            reg: smooth_l1(box_deltas(roi, target.bbox), [0.0; 4])?,
            cls: classification_ce(rec.score.unwrap_or(1.0), true)?,
            cmask: pixel_ce(&coarse_grid, &instance)?,
        });
        losses.push(InstanceLossInput {
            p_o: crop(&pred.p_o)?,
            p_m: crop(&pred.p_m)?,
            refined: crop(&refined)?,
            instance,
            intersection: target.intersection.crop(roi)?,
            complement: target.complement.crop(roi)?,
        });
    }
    Ok(MergedImage {
        record,
        losses,
        coarse,
    })
}

fn cmd_merge(args: MergeArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    for (slot, value) in [
        (&mut cfg.loss_weights.lambda_dec, args.lambda_dec),
        (&mut cfg.loss_weights.lambda_rmask, args.lambda_rmask),
        (&mut cfg.loss_weights.lambda_cons, args.lambda_cons),
    ] {
        if let Some(v) = value {
            *slot = v;
        }
    }
    cfg.validate()?;
    let pred = load_manifest(&args.input)?;
    let gt = args.gt.as_ref().map(load_manifest).transpose()?;
    let gt_by_id: std::collections::BTreeMap<&str, &ImageRecord> = gt
        .iter()
        .flat_map(|m| &m.images)
        .map(|r| (r.image_id.as_str(), r))
        .collect();
    let merged = pred
        .images
        .par_iter()
        .map(|img| {
            let gt_img = gt_by_id.get(img.image_id.as_str()).copied();
            if gt.is_some() && gt_img.is_none() {
                log::warn!("{}: no ground-truth image; no loss", img.image_id);
            }
            merge_image(&args.input, img, gt_img, cfg.threshold)
        })
        .collect::<Result<Vec<_>>>()?;

    let out = DatasetManifest {
        version: pred.version.clone(),
        images: merged.iter().map(|m| m.record.clone()).collect(),
    };
    let breakdown = if gt.is_some() {
        let (dec, rmask, cons) =
            mask_losses(&merged.iter().map(|m| m.losses.clone()).collect::<Vec<_>>())?;
        let parts = LossParts {
            coarse: mean_coarse(merged.iter().map(|m| m.coarse.as_slice())),
            dec,
            rmask,
            cons,
        };
        Some(total_loss(&parts, &cfg.loss_weights)?)
    } else {
        None
    };
    // validate everything before the first write
    out.validate()?;
    save_manifest(&out, &args.out)?;
    if let Some(b) = breakdown {
        match &args.loss_out {
            Some(path) => write_json(path, &b)?,
            None => print!("{}", canonical_json(&b)),
        }
    }
    Ok(())
}

/// Per-image instance means, then the mean over images that have any.
fn mean_coarse<'a>(images: impl Iterator<Item = &'a [CoarseLoss]>) -> CoarseLoss {
    let mut acc = CoarseLoss::default();
    let mut n_images = 0usize;
    for img in images.filter(|v| !v.is_empty()) {
        let n = img.len() as f64;
        acc.reg += img.iter().map(|c| c.reg).sum::<f64>() / n;
        acc.cls += img.iter().map(|c| c.cls).sum::<f64>() / n;
        acc.cmask += img.iter().map(|c| c.cmask).sum::<f64>() / n;
        n_images += 1;
    }
    if n_images > 0 {
        let k = n_images as f64;
        acc.reg /= k;
        acc.cls /= k;
        acc.cmask /= k;
    }
    acc
}

fn load_bank(path: &Path, class: CellClass) -> Result<Vec<CellCrop>> {
    let manifest = load_manifest(path)?;
    let mut bank = Vec::new();
    for rec in &manifest.images {
        if !rec.instances.iter().any(|i| i.class == class) {
            continue;
        }
        let file = rec.file_path.as_deref().ok_or_else(|| {
            Error::invalid(format!("bank image {} has no file_path", rec.image_id))
        })?;
        let pixels = read_rgb_png(&resolve_path(path, file))?;
        let ann = rec.to_annotation()?;
        for inst in ann.of_class(class) {
            bank.push(extract_cell(&pixels, inst)?);
        }
    }
    Ok(bank)
}

fn procedural_bank(class: CellClass, canvas: [usize; 2]) -> Result<Vec<CellCrop>> {
    let side = (canvas[0].min(canvas[1]) / 3).max(4);
    let shapes = [
        (side, side, [180, 90, 150]),
        (side + side / 4, side, [150, 80, 170]),
        (side, side - side / 5, [200, 120, 140]),
    ];
    shapes
        .iter()
        .map(|&(w, h, color)| ellipse_cell(w.min(canvas[0]), h.min(canvas[1]), color, class))
        .collect()
}

fn cmd_synthesize(args: SynthesizeArgs, cfg: RunConfig) -> Result<()> {
    let class: CellClass = args.class.into();
    let synth = cfg.synth;
    synth.validate()?;
    let bank = match &args.bank {
        Some(path) => load_bank(path, class)?,
        None => procedural_bank(class, synth.canvas)?,
    };
    let bank: Vec<CellCrop> = bank
        .into_iter()
        .filter(|c| {
            let fits = c.width() <= synth.canvas[0] && c.height() <= synth.canvas[1];
            if !fits {
                log::warn!(
                    "skipping {}x{} bank cell larger than the canvas",
                    c.width(),
                    c.height()
                );
            }
            fits
        })
        .collect();
    if bank.is_empty() {
        return Err(Error::invalid(format!(
            "no {class} cells in the bank fit the canvas"
        )));
    }
    let [cw, ch] = synth.canvas;
    let background = match &args.background {
        Some(p) => tile_background(&read_rgb_png(p)?, cw, ch)?,
        None => image::RgbImage::from_pixel(cw as u32, ch as u32, image::Rgb(synth.background)),
    };
    let samples = (0..args.n)
        .into_par_iter()
        .map(|i| {
            let mut c = synth.clone();
            c.seed = cfg.seed.wrapping_add(i as u64);
            let sample = generate_on(&c, &bank, &background)?;
            log::debug!("sample {i}: overlaps {:?}", sample.achieved_overlaps);
            Ok(sample)
        })
        .collect::<Result<Vec<_>>>()?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut images = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("synth_{i:05}.png");
        write_rgb_png(&args.out.join(&name), &sample.image)?;
        let mut rec = ImageRecord::from_annotation(&sample.annotation, Some(name));
        rec.attach_layers(&sample.recorded_layers);
        images.push(rec);
    }
    save_manifest(
        &DatasetManifest {
            images,
            ..DatasetManifest::default()
        },
        args.out.join("manifest.json"),
    )
}

fn roi_predictions(
    manifest_path: &Path,
    img: &ImageRecord,
    class: CellClass,
    min_score: Option<f64>,
) -> Result<Vec<RoiPrediction>> {
    let mut out = Vec::new();
    for rec in img.instances.iter().filter(|r| r.class == class) {
        if let (Some(min), Some(s)) = (min_score, rec.score) {
            if s < min {
                continue;
            }
        }
        let (grid, bbox) = match (&rec.refined_png, rec.mask(img.width, img.height)?) {
            (Some(p), _) => {
                let bbox = rec.bbox()?.ok_or_else(|| {
                    Error::invalid(format!("instance {}: refined_png needs a bbox", rec.id))
                })?;
                (read_prob_png(&resolve_path(manifest_path, p))?, bbox)
            }
            (None, Some(mask)) => match mask.bbox() {
                Some(b) => (ProbGrid::from_mask(&mask.crop(b)?), b),
                None => continue,
            },
            (None, None) => {
                log::warn!(
                    "{}: instance {} has no refined_png or rle; skipped",
                    img.image_id,
                    rec.id
                );
                continue;
            }
        };
        out.push(RoiPrediction {
            grid,
            bbox,
            score: rec.score,
        });
    }
    Ok(out)
}

fn cmd_attention(args: AttentionArgs) -> Result<()> {
    let manifest = load_manifest(&args.input)?;
    let class: CellClass = args.class.into();
    let selected: Vec<&ImageRecord> = manifest
        .images
        .iter()
        .filter(|r| args.image.as_deref().is_none_or(|id| r.image_id == id))
        .collect();
    if selected.is_empty() {
        return Err(Error::invalid(match &args.image {
            Some(id) => format!("image {id} not in the manifest"),
            None => "manifest has no images".to_string(),
        }));
    }
    let features = match &args.features {
        Some(path) => {
            if selected.len() != 1 {
                return Err(Error::invalid(
                    "--features needs exactly one image; select it with --image",
                ));
            }
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            Some(FeatureGrid::read_from(std::io::BufReader::new(file))?)
        }
        None => None,
    };
    let maps = selected
        .par_iter()
        .map(|img| {
            let preds = roi_predictions(&args.input, img, class, args.min_score)?;
            aggregate_attention(&preds, img.width, img.height)
        })
        .collect::<Result<Vec<_>>>()?;
    let reweighted = match &features {
        Some(f) => Some(reweight(f, &maps[0])?),
        None => None,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for (img, map) in selected.iter().zip(&maps) {
        write_prob_png(
            &args.out.join(format!("{}_attention.png", img.image_id)),
            &map.to_prob_grid(),
        )?;
    }
    if let Some(r) = reweighted {
        write_atomic(
            &args
                .out
                .join(format!("{}_reweighted.bin", selected[0].image_id)),
            &r.to_bytes(),
        )?;
    }
    Ok(())
}

fn report_csv(report: &MetricsReport) -> String {
    let mut out = String::from("class,map,dice,f1,aji,tpp,fno\n");
    let rows = report
        .classes
        .iter()
        .map(|(c, m)| (c.as_str(), m))
        .chain(std::iter::once(("average", &report.average)));
    for (name, m) in rows {
        let map = m.map.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{name},{map},{},{},{},{},{}",
            m.dice, m.f1, m.aji, m.tpp, m.fno
        );
    }
    out
}

fn cmd_evaluate(args: EvaluateArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(t) = args.threshold {
        cfg.eval.iou_threshold = t;
    }
    if let Some(t) = args.fno_dice {
        cfg.eval.fno_dice_threshold = t;
    }
    if let Some(m) = args.dice_mode {
        cfg.eval.dice_mode = match m {
            DiceModeArg::Instance => DiceMode::Instance,
            DiceModeArg::Union => DiceMode::Union,
        };
    }
    let gt: Vec<ImageAnnotation> = load_manifest(&args.gt)?.annotations()?;
    let pred: Vec<ImageAnnotation> = load_manifest(&args.pred)?.annotations()?;
    let report = evaluate_dataset(&gt, &pred, &cfg.eval)?;
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => print!("{}", canonical_json(&report)),
    }
    if let Some(path) = &args.csv {
        write_atomic(path, report_csv(&report).as_bytes())?;
    }
    Ok(())
}
