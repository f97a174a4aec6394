use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use weldqa_core::augment::{bucket_report, scale_dataset, BucketReport};
use weldqa_core::dataset::{load_detections, load_voc, split, write_voc};
use weldqa_core::eval::{compare_runs, evaluate, EvalResult};
use weldqa_core::qa::{assess, verdict_summary, verdicts_csv};
use weldqa_core::raster::{crop, gray_to_rgb, normalize_contrast};
use weldqa_core::{Annotation, CropRect, Dataset, ImageRecord, Raster};

use crate::config::RunConfig;
use crate::{AssessArgs, AugmentArgs, Command, CompareArgs, EvalArgs, PrepArgs, SplitArgs, StatsArgs, UsageError};

/// Frame the network consumes; the default crop window.
const NET_INPUT: u32 = 300;

pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Stats(a) => stats(a, cfg),
        Command::Prep(a) => prep(a, cfg),
        Command::Augment(a) => augment(a, cfg),
        Command::Split(a) => split_cmd(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Compare(a) => compare(a, cfg),
        Command::Assess(a) => assess_cmd(a, cfg),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting worker threads")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// `NAME=PATH` or a bare path named after its last component.
fn named_path(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_owned(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_owned());
            (name, path)
        }
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    load_voc(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// Points every image record at `<dir>/<image_id>.png`.
fn relocate(d: &mut Dataset, dir: &Path) {
    for img in &mut d.images {
        img.file_path = dir.join(format!("{}.png", img.image_id));
    }
}

fn stats(a: &StatsArgs, cfg: &RunConfig) -> Result<()> {
    let named: Vec<(String, PathBuf)> = a.dataset.iter().map(|s| named_path(s)).collect();
    let sets = named
        .iter()
        .map(|(_, p)| load_dataset(p))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(&str, &Dataset)> = named.iter().map(|(n, _)| n.as_str()).zip(&sets).collect();
    let report = bucket_report(&rows, &cfg.buckets);
    print!("{report}");
    if let Some(out) = &cfg.out {
        write_report(out, &report)?;
    }
    Ok(())
}

fn write_report(out: &Path, report: &BucketReport) -> Result<()> {
    create_dir(out)?;
    write_text(&out.join("size_report.csv"), &report.to_csv())?;
    write_json(&out.join("size_report.json"), report)
}

fn prep(a: &PrepArgs, cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let d = load_dataset(&a.dataset)?;
    create_dir(out)?;
    let by_image = d.annotations_by_image();

    let prepared = pool(cfg.workers)?.install(|| {
        d.images
            .par_iter()
            .map(|img| {
                let anns: Vec<Annotation> = by_image
                    .get(img.image_id.as_str())
                    .into_iter()
                    .flatten()
                    .map(|a| (*a).clone())
                    .collect();
                prep_one(img, &anns, cfg, out)
                    .with_context(|| format!("preparing {}", img.file_path.display()))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut result = Dataset::default();
    for (record, anns) in prepared {
        result.images.push(record);
        result.annotations.extend(anns);
    }
    write_voc(&result, out)?;
    info!(
        "prepared {} images with {} boxes into {}",
        result.images.len(),
        result.annotations.len(),
        out.display()
    );
    Ok(())
}

fn prep_one(
    img: &ImageRecord,
    anns: &[Annotation],
    cfg: &RunConfig,
    out: &Path,
) -> Result<(ImageRecord, Vec<Annotation>)> {
    let raster = Raster::load(&img.file_path)?;
    let rect = match cfg.crop {
        Some(r) => r,
        None => CropRect::top_centered(raster.width(), raster.height(), NET_INPUT, NET_INPUT)?,
    };
    let (mut r, kept) = crop(&raster, rect, anns, cfg.prep_min_box_area)?;
    if kept.len() < anns.len() {
        warn!(
            "{}: {} of {} boxes fell outside the crop",
            img.image_id,
            anns.len() - kept.len(),
            anns.len()
        );
    }
    if r.channels() == 1 {
        r = gray_to_rgb(&r)?;
    }
    if cfg.enhance {
        r = normalize_contrast(&r);
    }
    let path = out.join(format!("{}.png", img.image_id));
    r.save_png(&path)?;
    Ok((
        ImageRecord {
            image_id: img.image_id.clone(),
            file_path: path,
            width: r.width(),
            height: r.height(),
            channels: r.channels(),
        },
        kept,
    ))
}

fn augment(a: &AugmentArgs, cfg: &RunConfig) -> Result<()> {
    let plan = cfg
        .plan
        .as_ref()
        .ok_or_else(|| UsageError("augment needs --factor (or augment.factor in the config)".into()))?;
    let out = cfg.out()?;
    let d = load_dataset(&a.dataset)?;
    create_dir(out)?;

    let mut scaled = scale_dataset(
        &d,
        plan,
        cfg.workers,
        |rec| Raster::load(&rec.file_path),
        |rec, r| r.save_png(&out.join(&rec.file_path)),
    )?;
    relocate(&mut scaled.dataset, out);
    write_voc(&scaled.dataset, out)?;
    write_text(&out.join("provenance.jsonl"), &scaled.provenance_jsonl())?;

    let report = bucket_report(
        &[("source", &d), (&format!("x{} Aug", plan.scale_factor), &scaled.dataset)],
        &cfg.buckets,
    );
    print!("{report}");
    info!(
        "wrote {} images ({} boxes) to {}",
        scaled.dataset.images.len(),
        scaled.dataset.annotations.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    seed: u64,
    ratios: [f64; 3],
    train: Vec<&'a str>,
    val: Vec<&'a str>,
    test: Vec<&'a str>,
}

fn split_cmd(a: &SplitArgs, cfg: &RunConfig) -> Result<()> {
    let ratios = cfg
        .ratios
        .ok_or_else(|| UsageError("split needs --ratios (or split.ratios in the config)".into()))?;
    let out = cfg.out()?;
    let d = load_dataset(&a.dataset)?;
    let (train, val, test) = split(&d, ratios, cfg.seed);

    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let dir = out.join(name);
        create_dir(&dir)?;
        let mut part = part.clone();
        for img in &mut part.images {
            let file_name = img
                .file_path
                .file_name()
                .map(PathBuf::from)
                .unwrap_or_else(|| format!("{}.png", img.image_id).into());
            let target = dir.join(file_name);
            fs::copy(&img.file_path, &target).with_context(|| {
                format!("copying {} to {}", img.file_path.display(), target.display())
            })?;
            img.file_path = target;
        }
        write_voc(&part, &dir)?;
        println!("{name}: {} images, {} boxes", part.images.len(), part.annotations.len());
    }

    let manifest = SplitManifest {
        seed: cfg.seed,
        ratios: [ratios.train, ratios.val, ratios.test],
        train: ids(&train),
        val: ids(&val),
        test: ids(&test),
    };
    write_json(&out.join("split.json"), &manifest)
}

fn ids(p: &Dataset) -> Vec<&str> {
    let mut v: Vec<&str> = p.images.iter().map(|i| i.image_id.as_str()).collect();
    v.sort_unstable();
    v
}

fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let d = load_dataset(&a.dataset)?;
    let dets = load_detections(&a.detections)?;
    let result = pool(cfg.workers)?.install(|| evaluate(&dets, &d, &cfg.eval))?;
    for id in &result.unknown_image_ids {
        warn!("detections reference image {id:?}, which is not in the dataset");
    }
    print!("{}", result.summary());
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_json(&out.join("eval.json"), &result)?;
        write_text(&out.join("eval.csv"), &result.to_csv(&a.name))?;
    }
    Ok(())
}

fn compare(a: &CompareArgs, cfg: &RunConfig) -> Result<()> {
    let runs = a
        .reports
        .iter()
        .map(|arg| {
            let (name, path) = named_path(arg);
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let r: EvalResult = serde_json::from_str(&text)
                .with_context(|| format!("parsing evaluation report {}", path.display()))?;
            Ok((name, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let cmp = compare_runs(&runs);
    print!("{cmp}");
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join("compare.csv"), &cmp.to_csv())?;
        write_text(&out.join("compare_series.csv"), &cmp.series_csv())?;
        write_json(&out.join("compare.json"), &cmp)?;
    }
    Ok(())
}

fn assess_cmd(a: &AssessArgs, cfg: &RunConfig) -> Result<()> {
    let threshold = cfg
        .threshold_mm
        .ok_or_else(|| UsageError("assess needs --threshold-mm (or qa.threshold_mm in the config)".into()))?;
    let dets = load_detections(&a.detections)?;
    let d = a.dataset.as_deref().map(load_dataset).transpose()?;
    let ids: Vec<&str> = d
        .iter()
        .flat_map(|d| d.images.iter().map(|i| i.image_id.as_str()))
        .collect();
    let verdicts = assess(&dets, &ids, threshold, cfg.min_score, &cfg.calibration)?;
    print!("{}", verdict_summary(&verdicts));
    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_text(&out.join("verdicts.csv"), &verdicts_csv(&verdicts))?;
        write_json(&out.join("verdicts.json"), &verdicts)?;
    }
    Ok(())
}
