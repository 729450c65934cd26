mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use common::*;
use deoverlap::decompose::decompose_image;
use deoverlap::io::{
    load_manifest, save_manifest, write_prob_png, DatasetManifest, ImageRecord, InstanceRecord,
};
use deoverlap::metrics::MetricsReport;
use deoverlap::recombine::LossBreakdown;
use deoverlap::{CellClass, ImageAnnotation, ProbGrid};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deoverlap"))
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Run {
    let out = bin()
        .args(args)
        .env("DEOVERLAP_LOG", "error")
        .output()
        .unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gt_manifest(dir: &Path, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    let images = (0..6)
        .map(|k| {
            let gt = random_gt(&mut r, 32, 24, 6);
            let ann = ImageAnnotation::new(
                format!("g{k}"),
                32,
                24,
                gt.iter().map(|i| i.to_annotation(32, 24)).collect(),
            )
            .unwrap();
            ImageRecord::from_annotation(&ann, None)
        })
        .collect();
    let path = dir.join("gt.json");
    save_manifest(
        &DatasetManifest {
            images,
            ..DatasetManifest::default()
        },
        &path,
    )
    .unwrap();
    path
}

fn error_json(stderr: &str) -> serde_json::Value {
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["bogus"][..],
        &["decompose", "--in"],
        &["evaluate", "--gt", "a.json", "--nope", "1"],
        &[],
    ] {
        let r = run(args);
        assert_eq!(r.code, 2, "{args:?}");
        assert_eq!(error_json(&r.stderr)["error"], "usage");
    }
    assert_eq!(run(&["--help"]).code, 0);
}

#[test]
fn data_errors_exit_one_with_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&[
        "decompose",
        "--in",
        s(&dir.path().join("missing.json")),
        "--out",
        s(&dir.path().join("o.json")),
    ]);
    assert_eq!(r.code, 1);
    assert_eq!(error_json(&r.stderr)["error"], "io-error");
    assert!(!dir.path().join("o.json").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"version":"1","images":[{"image_id":"a","width":2,"height":2,"instances":[{"id":1,"class":"nuclei","rle":[1,4]}]}]}"#,
    )
    .unwrap();
    let r = run(&["evaluate", "--gt", s(&bad), "--pred", s(&bad)]);
    assert_eq!(r.code, 1);
    let e = error_json(&r.stderr);
    assert_eq!(e["error"], "corrupt-data");
    assert!(e["message"].as_str().unwrap().contains("instance 1"));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"threshold": 2.0}"#).unwrap();
    let r = run(&[
        "--config",
        s(&cfg),
        "decompose",
        "--in",
        s(&bad),
        "--out",
        s(&dir.path().join("x.json")),
    ]);
    assert_eq!(
        (r.code, error_json(&r.stderr)["error"].as_str()),
        (1, Some("invalid-input"))
    );
}

#[test]
fn decompose_populates_layers_for_selected_class() {
    let dir = tempfile::tempdir().unwrap();
    let gt = gt_manifest(dir.path(), 11);
    let out = dir.path().join("layers.json");
    assert_eq!(
        run(&[
            "decompose",
            "--in",
            s(&gt),
            "--class",
            "cytoplasm",
            "--out",
            s(&out)
        ])
        .code,
        0
    );
    let m = load_manifest(&out).unwrap();
    for (img, ann) in m.images.iter().zip(m.annotations().unwrap()) {
        let dec = decompose_image(&ann, CellClass::Cytoplasm);
        for rec in &img.instances {
            let has = rec.intersection_rle.is_some() && rec.complement_rle.is_some();
            assert_eq!(
                has,
                rec.class == CellClass::Cytoplasm,
                "{} {}",
                img.image_id,
                rec.id
            );
            if has {
                let l = dec.get(rec.id).unwrap();
                assert_eq!(
                    rec.intersection_mask(img.width, img.height)
                        .unwrap()
                        .unwrap(),
                    l.intersection
                );
                assert_eq!(
                    rec.complement_mask(img.width, img.height).unwrap().unwrap(),
                    l.complement
                );
            }
        }
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let gt = gt_manifest(dir.path(), 12);
    let layers = dir.path().join("layers.json");
    assert_eq!(
        run(&["decompose", "--in", s(&gt), "--out", s(&layers)]).code,
        0
    );

    let mut outputs = Vec::new();
    for jobs in ["1", "4", "1"] {
        let d = dir.path().join(format!("run{}", outputs.len()));
        std::fs::create_dir(&d).unwrap();
        let merged = d.join("merged.json");
        let report = d.join("report.json");
        let synth = d.join("synth");
        let a = run(&[
            "--jobs",
            jobs,
            "merge",
            "--in",
            s(&layers),
            "--gt",
            s(&layers),
            "--out",
            s(&merged),
        ]);
        let b = run(&[
            "--jobs",
            jobs,
            "evaluate",
            "--gt",
            s(&gt),
            "--pred",
            s(&merged),
            "--out",
            s(&report),
            "--csv",
            s(&d.join("r.csv")),
        ]);
        let c = run(&[
            "--jobs",
            jobs,
            "--seed",
            "5",
            "synthesize",
            "--n",
            "4",
            "--out",
            s(&synth),
        ]);
        assert_eq!(
            (a.code, b.code, c.code),
            (0, 0, 0),
            "{} {} {}",
            a.stderr,
            b.stderr,
            c.stderr
        );
        let mut files = vec![a.stdout];
        for p in [
            &merged,
            &report,
            &d.join("r.csv"),
            &synth.join("manifest.json"),
            &synth.join("synth_00003.png"),
        ] {
            files.push(format!("{:?}", std::fs::read(p).unwrap()));
        }
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn synthesize_manifest_layers_match_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth");
    let cfg = dir.path().join("synth.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3, "cells_per_cluster": 3, "target_overlap": 0.3, "overlap_tolerance": 0.05,
            "alpha": 0.5, "canvas": [80, 72]}"#,
    )
    .unwrap();
    let r = run(&[
        "synthesize",
        "--config",
        s(&cfg),
        "--n",
        "10",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let m = load_manifest(out.join("manifest.json")).unwrap();
    assert_eq!(m.images.len(), 10);
    for (img, ann) in m.images.iter().zip(m.annotations().unwrap()) {
        let png = image::open(out.join(img.file_path.as_ref().unwrap())).unwrap();
        assert_eq!((png.width(), png.height()), (80, 72));
        assert_eq!(ann.instances().len(), 3);
        let dec = decompose_image(&ann, CellClass::Cytoplasm);
        for rec in &img.instances {
            let l = dec.get(rec.id).unwrap();
            assert_eq!(
                rec.intersection_mask(80, 72).unwrap().unwrap(),
                l.intersection
            );
            assert_eq!(rec.complement_mask(80, 72).unwrap().unwrap(), l.complement);
        }
    }
}

#[test]
fn synthesize_from_a_bank_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // a bank image: two flat-coloured cells
    let ann = ImageAnnotation::new(
        "bank",
        40,
        40,
        vec![
            Inst {
                id: 1,
                class: CellClass::Cytoplasm,
                px: (0..1600).map(|i| (i % 40) < 18 && (i / 40) < 16).collect(),
                score: None,
            }
            .to_annotation(40, 40),
            Inst {
                id: 2,
                class: CellClass::Cytoplasm,
                px: (0..1600)
                    .map(|i| (20..38).contains(&(i % 40)) && (20..36).contains(&(i / 40)))
                    .collect(),
                score: None,
            }
            .to_annotation(40, 40),
        ],
    )
    .unwrap();
    let pixels = image::RgbImage::from_pixel(40, 40, image::Rgb([120, 60, 200]));
    deoverlap::io::write_rgb_png(&dir.path().join("bank.png"), &pixels).unwrap();
    let bank = dir.path().join("bank.json");
    save_manifest(
        &DatasetManifest {
            images: vec![ImageRecord::from_annotation(&ann, Some("bank.png".into()))],
            ..DatasetManifest::default()
        },
        &bank,
    )
    .unwrap();
    let out = dir.path().join("out");
    let r = run(&[
        "--seed",
        "9",
        "synthesize",
        "--bank",
        s(&bank),
        "--n",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(
        load_manifest(out.join("manifest.json"))
            .unwrap()
            .images
            .len(),
        3
    );
}

#[test]
fn merge_reads_layer_pngs_and_reports_losses() {
    let dir = tempfile::tempdir().unwrap();
    // one 8x8 instance in a 12x10 image: left half intersection, right half complement
    let w = (12, 10);
    let e: Vec<bool> = (0..120)
        .map(|i| (2..10).contains(&(i % 12)) && (1..9).contains(&(i / 12)))
        .collect();
    let ann = ImageAnnotation::new(
        "p",
        w.0,
        w.1,
        vec![Inst {
            id: 1,
            class: CellClass::Nuclei,
            px: e,
            score: None,
        }
        .to_annotation(w.0, w.1)],
    )
    .unwrap();
    let mut gt_rec = ImageRecord::from_annotation(&ann, None);
    let mut o = vec![0.0; 64];
    let mut m = vec![0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            if x < 4 {
                o[y * 8 + x] = 1.0;
            } else {
                m[y * 8 + x] = 1.0;
            }
        }
    }
    // predictions at half resolution; nearest resampling restores the 8x8 box
    let half = |v: &[f64]| {
        ProbGrid::new(
            4,
            4,
            (0..16).map(|i| v[(i / 4) * 2 * 8 + (i % 4) * 2]).collect(),
        )
        .unwrap()
    };
    write_prob_png(&dir.path().join("o.png"), &half(&o)).unwrap();
    write_prob_png(&dir.path().join("m.png"), &half(&m)).unwrap();
    let mut pred_rec = ImageRecord {
        instances: vec![],
        ..gt_rec.clone()
    };
    pred_rec.instances.push(InstanceRecord {
        bbox: Some([2, 1, 10, 9]),
        score: Some(0.8),
        intersection_png: Some("o.png".into()),
        complement_png: Some("m.png".into()),
        ..InstanceRecord::new(1, CellClass::Nuclei)
    });
    let gt_layers = decompose_image(&ann, CellClass::Nuclei);
    gt_rec.attach_layers(&gt_layers);
    let (pred, gt) = (dir.path().join("pred.json"), dir.path().join("gt.json"));
    save_manifest(
        &DatasetManifest {
            images: vec![pred_rec],
            ..DatasetManifest::default()
        },
        &pred,
    )
    .unwrap();
    save_manifest(
        &DatasetManifest {
            images: vec![gt_rec],
            ..DatasetManifest::default()
        },
        &gt,
    )
    .unwrap();

    let merged = dir.path().join("merged.json");
    let loss = dir.path().join("loss.json");
    let r = run(&[
        "merge",
        "--in",
        s(&pred),
        "--gt",
        s(&gt),
        "--out",
        s(&merged),
        "--loss-out",
        s(&loss),
        "--lambda-cons",
        "2",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let out = load_manifest(&merged).unwrap().annotations().unwrap();
    assert_eq!(out[0].instances()[0].mask(), ann.instances()[0].mask());
    assert_eq!(out[0].instances()[0].score, Some(0.8));

    let b: LossBreakdown = serde_json::from_str(&std::fs::read_to_string(&loss).unwrap()).unwrap();
    // the instance has no overlap, so the true intersection is empty while p_o fires on the left half
    assert!(b.dec > 1.0, "{b:?}");
    assert!(
        b.rmask < 1e-6 && b.cons < 1e-6 && b.coarse.reg == 0.0,
        "{b:?}"
    );
    let expected = b.coarse.reg + b.coarse.cls + b.coarse.cmask + b.dec + b.rmask + 2.0 * b.cons;
    assert!((b.total - expected).abs() < 1e-12);
}

#[test]
fn attention_writes_map_and_reweighted_features() {
    let dir = tempfile::tempdir().unwrap();
    let gt = gt_manifest(dir.path(), 13);
    let feats = deoverlap::attention::FeatureGrid::filled(16, 12, 3, 2.0).unwrap();
    let fpath = dir.path().join("f.bin");
    std::fs::write(&fpath, feats.to_bytes()).unwrap();
    let out = dir.path().join("att");
    let r = run(&[
        "attention",
        "--in",
        s(&gt),
        "--out",
        s(&out),
        "--image",
        "g0",
        "--features",
        s(&fpath),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let map = deoverlap::io::read_prob_png(&out.join("g0_attention.png")).unwrap();
    assert_eq!((map.width(), map.height()), (32, 24));
    // 16-bit storage rounds values within 1e-6 of 1 up to exactly 1
    assert!(map.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(map.values().iter().any(|&v| v > 0.9));
    let bytes = std::fs::read(out.join("g0_reweighted.bin")).unwrap();
    let back = deoverlap::attention::FeatureGrid::read_from(bytes.as_slice()).unwrap();
    assert_eq!((back.width(), back.height(), back.channels()), (16, 12, 3));

    // several images and --features together is ambiguous
    let r = run(&[
        "attention",
        "--in",
        s(&gt),
        "--out",
        s(&out),
        "--features",
        s(&fpath),
    ]);
    assert_eq!(r.code, 1);
}

#[test]
fn evaluate_report_schema() {
    let dir = tempfile::tempdir().unwrap();
    let gt = gt_manifest(dir.path(), 14);
    let r = run(&[
        "evaluate",
        "--gt",
        s(&gt),
        "--pred",
        s(&gt),
        "--dice-mode",
        "union",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: serde_json::Value = serde_json::from_str(&r.stdout).unwrap();
    for key in ["average", "cytoplasm", "nuclei"] {
        let row = v[key].as_object().unwrap_or_else(|| panic!("{key}"));
        let mut keys: Vec<&str> = row.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["aji", "dice", "f1", "fno", "map", "tpp"]);
    }
    let report: MetricsReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.average.aji, 1.0);
    assert_eq!(report.average.map, None);
}
