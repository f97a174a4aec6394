//! Run configuration: an optional TOML file merged with command-line flags.
//!
//! ```toml
//! seed = 7
//! workers = 4
//!
//! [buckets]
//! small_max_area = 1024.0
//! large_min_area = 4096.0
//!
//! [prep]
//! crop = [170, 0, 300, 300]
//! enhance = true
//!
//! [augment]
//! factor = 6
//! ops = ["scale_translate", "flip_h", "gaussian_blur"]
//!
//! [split]
//! ratios = [0.8, 0.1, 0.1]
//!
//! [eval]
//! iou_thresholds = [0.5, 0.75]
//!
//! [qa]
//! threshold_mm = 0.5
//! px_per_mm = 40.0
//! ```
//!
//! Flags win over file values. Every value is checked before a subcommand
//! touches the file system.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use weldqa_core::augment::{AugmentPlan, OpFamily, ParamRanges};
use weldqa_core::dataset::SplitRatios;
use weldqa_core::eval::EvalConfig;
use weldqa_core::qa::{Calibration, SizeMeasure};
use weldqa_core::raster::{NoiseChannels, DEFAULT_MIN_BOX_AREA};
use weldqa_core::{CropRect, SizeBuckets};

use crate::{Cli, Command, UsageError};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub buckets: Option<SizeBuckets>,
    pub prep: PrepSection,
    pub augment: AugmentSection,
    pub split: SplitSection,
    pub eval: EvalSection,
    pub qa: QaSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepSection {
    /// `[x, y, width, height]`
    pub crop: Option<[u32; 4]>,
    pub enhance: Option<bool>,
    pub min_box_area: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub factor: Option<u32>,
    pub ops: Option<Vec<OpFamily>>,
    pub ranges: Option<ParamRanges>,
    pub min_box_area: Option<f64>,
    pub fill: Option<u8>,
    pub noise_channels: Option<NoiseChannels>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub ratios: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_thresholds: Option<Vec<f64>>,
    pub max_dets: Option<Vec<usize>>,
    pub recall_points: Option<usize>,
    pub score_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QaSection {
    pub threshold_mm: Option<f64>,
    pub min_score: Option<f64>,
    pub px_per_mm: Option<f64>,
    pub measure: Option<SizeMeasure>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub buckets: SizeBuckets,
    /// `None` means a top-centred 300×300 window.
    pub crop: Option<CropRect>,
    pub enhance: bool,
    pub prep_min_box_area: f64,
    pub plan: Option<AugmentPlan>,
    pub ratios: Option<SplitRatios>,
    pub eval: EvalConfig,
    pub threshold_mm: Option<f64>,
    pub min_score: f64,
    pub calibration: Calibration,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, cli: &Cli) -> Result<Self> {
        let workers = cli
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        let seed = cli.seed.or(file.seed).unwrap_or(0);

        let mut buckets = file.buckets.unwrap_or_default();
        let mut crop = file.prep.crop.map(|[x, y, w, h]| CropRect::new(x, y, w, h));
        let mut enhance = file.prep.enhance.unwrap_or(true);
        let mut factor = file.augment.factor;
        let mut ratios = file.split.ratios;
        let mut eval = EvalConfig::default();
        if let Some(t) = file.eval.iou_thresholds {
            eval.iou_thresholds = t;
        }
        if let Some(m) = file.eval.max_dets {
            eval.max_dets = m;
        }
        if let Some(r) = file.eval.recall_points {
            eval.recall_points = r;
        }
        if let Some(s) = file.eval.score_floor {
            eval.score_floor = s;
        }
        let mut threshold_mm = file.qa.threshold_mm;
        let mut min_score = file.qa.min_score.unwrap_or(0.0);
        let mut calibration = Calibration::default();
        if let Some(p) = file.qa.px_per_mm {
            calibration.px_per_mm = p;
        }
        if let Some(m) = file.qa.measure {
            calibration.measure = m;
        }

        match &cli.command {
            Command::Prep(a) => {
                crop = a.crop.map(|[x, y, w, h]| CropRect::new(x, y, w, h)).or(crop);
                if a.no_enhance {
                    enhance = false;
                }
            }
            Command::Augment(a) => factor = a.factor.or(factor),
            Command::Split(a) => ratios = a.ratios.or(ratios),
            Command::Eval(a) => {
                if let Some(t) = &a.iou_list {
                    eval.iou_thresholds = t.0.clone();
                }
                if let Some([s, l]) = a.buckets {
                    buckets = SizeBuckets::new(s, l)?;
                }
            }
            Command::Assess(a) => {
                threshold_mm = a.threshold_mm.or(threshold_mm);
                min_score = a.min_score.unwrap_or(min_score);
                if let Some(p) = a.px_per_mm {
                    calibration.px_per_mm = p;
                }
                if let Some(m) = a.measure {
                    calibration.measure = m;
                }
            }
            Command::Stats(_) | Command::Compare(_) => {}
        }

        buckets = SizeBuckets::new(buckets.small_max_area, buckets.large_min_area)?;
        eval.buckets = buckets;
        eval.validate()?;
        calibration.validate()?;

        let plan = match factor {
            Some(k) => {
                let mut plan = AugmentPlan::new(k, seed)?;
                if let Some(ops) = file.augment.ops {
                    plan.op_pool = ops;
                }
                if let Some(r) = file.augment.ranges {
                    plan.ranges = r;
                }
                if let Some(a) = file.augment.min_box_area {
                    plan.min_box_area = a;
                }
                if let Some(f) = file.augment.fill {
                    plan.fill = f;
                }
                if let Some(n) = file.augment.noise_channels {
                    plan.noise_channels = n;
                }
                plan.validate()?;
                Some(plan)
            }
            None => None,
        };
        let ratios = ratios
            .map(|[a, b, c]| SplitRatios::new(a, b, c))
            .transpose()?;

        let prep_min_box_area = file.prep.min_box_area.unwrap_or(DEFAULT_MIN_BOX_AREA);
        if prep_min_box_area.is_nan() || prep_min_box_area < 0.0 {
            return Err(UsageError("prep.min_box_area must be non-negative".into()).into());
        }
        if let Some(t) = threshold_mm {
            if !(t.is_finite() && t > 0.0) {
                return Err(UsageError(format!("threshold_mm must be positive, got {t}")).into());
            }
        }
        if !(0.0..=1.0).contains(&min_score) {
            return Err(UsageError(format!("min_score must lie in [0, 1], got {min_score}")).into());
        }

        Ok(RunConfig {
            seed,
            workers,
            out: cli.out.clone().or(file.out),
            buckets,
            crop,
            enhance,
            prep_min_box_area,
            plan,
            ratios,
            eval,
            threshold_mm,
            min_score,
            calibration,
        })
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("this subcommand needs --out".into()).into())
    }
}
