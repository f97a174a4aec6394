//! Seeded offline dataset scaling.
//!
//! Every generated image receives a random pair of distinct augmentation
//! families, applied in the sampled order. All randomness for one replica
//! comes from a stream seeded by a stable hash of
//! `(master_seed, image_id, replica, attempt)`, so output does not depend on
//! how many workers run or in what order they finish.

use std::fmt;

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{size_histogram, Annotation, Dataset, ImageRecord, SizeHistogram};
use crate::error::{Error, Result};
use crate::geometry::{AffineMap, SizeBuckets};
use crate::raster::{self, FlipAxis, NoiseChannels, Raster, DEFAULT_MIN_BOX_AREA};

/// Number of operations applied to each generated image.
pub const COMBO_SIZE: usize = 2;

/// How many times a replica is re-sampled when augmentation removed every box.
pub const MAX_ATTEMPTS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpFamily {
    ScaleTranslate,
    FlipH,
    FlipV,
    GaussianBlur,
    Contrast,
    GaussianNoise,
}

impl OpFamily {
    pub const ALL: [OpFamily; 6] = [
        OpFamily::ScaleTranslate,
        OpFamily::FlipH,
        OpFamily::FlipV,
        OpFamily::GaussianBlur,
        OpFamily::Contrast,
        OpFamily::GaussianNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpFamily::ScaleTranslate => "scale_translate",
            OpFamily::FlipH => "flip_h",
            OpFamily::FlipV => "flip_v",
            OpFamily::GaussianBlur => "gaussian_blur",
            OpFamily::Contrast => "contrast",
            OpFamily::GaussianNoise => "gaussian_noise",
        }
    }

    pub fn is_geometric(&self) -> bool {
        matches!(
            self,
            OpFamily::ScaleTranslate | OpFamily::FlipH | OpFamily::FlipV
        )
    }
}

impl fmt::Display for OpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OpFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown augmentation family {s:?}")))
    }
}

/// A concrete augmentation with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AugmentOp {
    /// Scale about the image centre, then translate by a fraction of the
    /// image width/height.
    ScaleTranslate {
        scale_x: f64,
        scale_y: f64,
        translate_x: f64,
        translate_y: f64,
    },
    FlipH,
    FlipV,
    GaussianBlur {
        sigma: f64,
    },
    Contrast {
        factor: f64,
    },
    GaussianNoise {
        sigma: f64,
        seed: u64,
    },
}

impl AugmentOp {
    pub fn family(&self) -> OpFamily {
        match self {
            AugmentOp::ScaleTranslate { .. } => OpFamily::ScaleTranslate,
            AugmentOp::FlipH => OpFamily::FlipH,
            AugmentOp::FlipV => OpFamily::FlipV,
            AugmentOp::GaussianBlur { .. } => OpFamily::GaussianBlur,
            AugmentOp::Contrast { .. } => OpFamily::Contrast,
            AugmentOp::GaussianNoise { .. } => OpFamily::GaussianNoise,
        }
    }

    /// Pixel map of a geometric op on a `width × height` frame.
    pub fn map(&self, width: u32, height: u32) -> Option<AffineMap> {
        let (w, h) = (width as f64, height as f64);
        match *self {
            AugmentOp::ScaleTranslate {
                scale_x,
                scale_y,
                translate_x,
                translate_y,
            } => Some(
                AffineMap::translation(translate_x * w, translate_y * h)
                    .compose(&AffineMap::scale_about(scale_x, scale_y, w / 2.0, h / 2.0)),
            ),
            AugmentOp::FlipH => Some(FlipAxis::Horizontal.map(width, height)),
            AugmentOp::FlipV => Some(FlipAxis::Vertical.map(width, height)),
            _ => None,
        }
    }
}

/// Inclusive parameter ranges sampled for each family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamRanges {
    pub scale: (f64, f64),
    /// Translation as a fraction of the image dimension.
    pub translate: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub contrast: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            scale: (0.8, 1.2),
            translate: (-0.1, 0.1),
            blur_sigma: (0.5, 2.0),
            contrast: (0.6, 1.4),
            noise_sigma: (2.0, 12.0),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64), min: f64, open: bool| {
            let low_ok = if open { lo > min } else { lo >= min };
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && low_ok) {
                return Err(Error::InvalidConfig(format!(
                    "{name} range ({lo}, {hi}) is invalid"
                )));
            }
            Ok(())
        };
        check("scale", self.scale, 0.0, true)?;
        check("translate", self.translate, f64::NEG_INFINITY, false)?;
        check("blur_sigma", self.blur_sigma, 0.0, false)?;
        check("contrast", self.contrast, 0.0, true)?;
        check("noise_sigma", self.noise_sigma, 0.0, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub op_pool: Vec<OpFamily>,
    pub scale_factor: u32,
    pub master_seed: u64,
    pub ranges: ParamRanges,
    pub min_box_area: f64,
    /// Sample value used where an affine warp reads outside the source.
    pub fill: u8,
    pub noise_channels: NoiseChannels,
}

impl AugmentPlan {
    /// Plan over all six families with default ranges.
    pub fn new(scale_factor: u32, master_seed: u64) -> Result<Self> {
        let plan = AugmentPlan {
            op_pool: OpFamily::ALL.to_vec(),
            scale_factor,
            master_seed,
            ranges: ParamRanges::default(),
            min_box_area: DEFAULT_MIN_BOX_AREA,
            fill: 0,
            noise_channels: NoiseChannels::Independent,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_factor < 1 {
            return Err(Error::InvalidConfig("scale factor must be at least 1".into()));
        }
        if self.families().len() < COMBO_SIZE {
            return Err(Error::InvalidConfig(format!(
                "augmentation pool needs at least {COMBO_SIZE} distinct families"
            )));
        }
        if self.min_box_area.is_nan() || self.min_box_area < 0.0 {
            return Err(Error::InvalidConfig("min_box_area must be non-negative".into()));
        }
        self.ranges.validate()
    }

    /// Distinct families of the pool, in first-appearance order.
    pub fn families(&self) -> Vec<OpFamily> {
        let mut out: Vec<OpFamily> = Vec::new();
        for f in &self.op_pool {
            if !out.contains(f) {
                out.push(*f);
            }
        }
        out
    }
}

/// Stable 64-bit seed for one replica attempt.
pub fn replica_seed(master_seed: u64, image_id: &str, replica: u32, attempt: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((image_id.len() as u64).to_le_bytes());
    h.update(image_id.as_bytes());
    h.update(replica.to_le_bytes());
    h.update(attempt.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The operations drawn for one replica together with the seed they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub source_image_id: String,
    pub replica: u32,
    pub attempt: u32,
    pub seed: u64,
    pub ops: [AugmentOp; COMBO_SIZE],
}

pub fn sample_combo(plan: &AugmentPlan, image_id: &str, replica: u32) -> Combo {
    sample_combo_attempt(plan, image_id, replica, 0)
}

pub fn sample_combo_attempt(plan: &AugmentPlan, image_id: &str, replica: u32, attempt: u32) -> Combo {
    let seed = replica_seed(plan.master_seed, image_id, replica, attempt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let families = plan.families();
    let n = families.len();
    // uniform over ordered pairs of distinct families
    let first = rng.random_range(0..n);
    let mut second = rng.random_range(0..n - 1);
    if second >= first {
        second += 1;
    }
    let ops = [
        sample_op(families[first], &plan.ranges, &mut rng),
        sample_op(families[second], &plan.ranges, &mut rng),
    ];
    Combo {
        source_image_id: image_id.to_owned(),
        replica,
        attempt,
        seed,
        ops,
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample_op(family: OpFamily, r: &ParamRanges, rng: &mut ChaCha8Rng) -> AugmentOp {
    match family {
        OpFamily::ScaleTranslate => AugmentOp::ScaleTranslate {
            scale_x: uniform(rng, r.scale),
            scale_y: uniform(rng, r.scale),
            translate_x: uniform(rng, r.translate),
            translate_y: uniform(rng, r.translate),
        },
        OpFamily::FlipH => AugmentOp::FlipH,
        OpFamily::FlipV => AugmentOp::FlipV,
        OpFamily::GaussianBlur => AugmentOp::GaussianBlur {
            sigma: uniform(rng, r.blur_sigma),
        },
        OpFamily::Contrast => AugmentOp::Contrast {
            factor: uniform(rng, r.contrast),
        },
        OpFamily::GaussianNoise => AugmentOp::GaussianNoise {
            sigma: uniform(rng, r.noise_sigma),
            seed: rng.next_u64(),
        },
    }
}

/// Replay record for one image of a scaled dataset. Originals carry no ops
/// and no seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub image_id: String,
    pub source_image_id: String,
    pub replica: u32,
    pub attempt: u32,
    pub seed: Option<u64>,
    pub ops: Vec<AugmentOp>,
    pub box_free: bool,
}

impl Provenance {
    fn original(image_id: &str) -> Self {
        Provenance {
            image_id: image_id.to_owned(),
            source_image_id: image_id.to_owned(),
            replica: 0,
            attempt: 0,
            seed: None,
            ops: Vec::new(),
            box_free: false,
        }
    }
}

/// Applies one op. Geometric ops move, clip and filter boxes; photometric
/// ops leave them untouched.
pub fn apply_op(
    r: &Raster,
    anns: &[Annotation],
    op: &AugmentOp,
    plan: &AugmentPlan,
) -> Result<(Raster, Vec<Annotation>)> {
    match *op {
        AugmentOp::ScaleTranslate { .. } => {
            let m = op.map(r.width(), r.height()).expect("geometric op");
            raster::affine_warp(r, &m, anns, plan.fill, plan.min_box_area)
        }
        AugmentOp::FlipH => Ok(raster::flip(r, FlipAxis::Horizontal, anns)),
        AugmentOp::FlipV => Ok(raster::flip(r, FlipAxis::Vertical, anns)),
        AugmentOp::GaussianBlur { sigma } => Ok((raster::gaussian_blur(r, sigma), anns.to_vec())),
        AugmentOp::Contrast { factor } => Ok((raster::adjust_contrast(r, factor), anns.to_vec())),
        AugmentOp::GaussianNoise { sigma, seed } => Ok((
            raster::add_gaussian_noise(r, sigma, seed, plan.noise_channels),
            anns.to_vec(),
        )),
    }
}

/// Image id given to a generated replica.
pub fn replica_id(source_image_id: &str, replica: u32) -> String {
    format!("{source_image_id}_aug{replica:02}")
}

/// Runs the combo's ops in order. Returned annotations carry the replica's
/// image id.
pub fn augment_one(
    r: &Raster,
    anns: &[Annotation],
    combo: &Combo,
    plan: &AugmentPlan,
) -> Result<(Raster, Vec<Annotation>, Provenance)> {
    let mut raster = r.clone();
    let mut boxes = anns.to_vec();
    for op in &combo.ops {
        let (next_raster, next_boxes) = apply_op(&raster, &boxes, op, plan)?;
        raster = next_raster;
        boxes = next_boxes;
    }
    let id = replica_id(&combo.source_image_id, combo.replica);
    for b in &mut boxes {
        b.image_id.clone_from(&id);
    }
    let provenance = Provenance {
        box_free: boxes.is_empty() && !anns.is_empty(),
        image_id: id,
        source_image_id: combo.source_image_id.clone(),
        replica: combo.replica,
        attempt: combo.attempt,
        seed: Some(combo.seed),
        ops: combo.ops.to_vec(),
    };
    Ok((raster, boxes, provenance))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScaledDataset {
    pub dataset: Dataset,
    /// One record per image of `dataset`, in the same order.
    pub provenance: Vec<Provenance>,
}

impl ScaledDataset {
    /// Newline-delimited JSON, one provenance record per line.
    pub fn provenance_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.provenance {
            out.push_str(&serde_json::to_string(p).expect("provenance serializes"));
            out.push('\n');
        }
        out
    }
}

struct SourceOutput {
    images: Vec<ImageRecord>,
    annotations: Vec<Annotation>,
    provenance: Vec<Provenance>,
}

/// Produces `k·N` images: every original plus `k − 1` augmented replicas of
/// each source image.
///
/// `load` supplies the raster of a source record and `store` receives every
/// output image (originals included) as soon as it is ready; both may be
/// called concurrently from `workers` threads. Output records are
/// `<image_id>.png` file names, ordered by source image id then replica.
pub fn scale_dataset<L, S>(
    d: &Dataset,
    plan: &AugmentPlan,
    workers: usize,
    load: L,
    store: S,
) -> Result<ScaledDataset>
where
    L: Fn(&ImageRecord) -> Result<Raster> + Sync,
    S: Fn(&ImageRecord, &Raster) -> Result<()> + Sync,
{
    plan.validate()?;
    d.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let by_image = d.annotations_by_image();
    let mut sources: Vec<&ImageRecord> = d.images.iter().collect();
    sources.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let outputs: Vec<SourceOutput> = pool.install(|| {
        sources
            .par_iter()
            .map(|src| {
                let anns: Vec<Annotation> = by_image
                    .get(src.image_id.as_str())
                    .into_iter()
                    .flatten()
                    .map(|a| (*a).clone())
                    .collect();
                scale_one(src, &anns, plan, &load, &store)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = ScaledDataset::default();
    out.dataset.split_tag = d.split_tag;
    for o in outputs {
        out.dataset.images.extend(o.images);
        out.dataset.annotations.extend(o.annotations);
        out.provenance.extend(o.provenance);
    }
    Ok(out)
}

fn scale_one<L, S>(
    src: &ImageRecord,
    anns: &[Annotation],
    plan: &AugmentPlan,
    load: &L,
    store: &S,
) -> Result<SourceOutput>
where
    L: Fn(&ImageRecord) -> Result<Raster>,
    S: Fn(&ImageRecord, &Raster) -> Result<()>,
{
    let raster = load(src)?;
    if (raster.width(), raster.height()) != (src.width, src.height) {
        return Err(Error::InvalidDataset(format!(
            "image {:?} is {}x{} but its record says {}x{}",
            src.image_id,
            raster.width(),
            raster.height(),
            src.width,
            src.height
        )));
    }
    let record_for = |id: &str, r: &Raster| ImageRecord {
        image_id: id.to_owned(),
        file_path: format!("{id}.png").into(),
        width: r.width(),
        height: r.height(),
        channels: r.channels(),
    };

    let k = plan.scale_factor as usize;
    let mut out = SourceOutput {
        images: Vec::with_capacity(k),
        annotations: Vec::new(),
        provenance: Vec::with_capacity(k),
    };

    let original = record_for(&src.image_id, &raster);
    store(&original, &raster)?;
    out.images.push(original);
    out.annotations.extend_from_slice(anns);
    out.provenance.push(Provenance::original(&src.image_id));

    for replica in 1..plan.scale_factor {
        let mut attempt = 0;
        let (img, boxes, prov) = loop {
            let combo = sample_combo_attempt(plan, &src.image_id, replica, attempt);
            let result = augment_one(&raster, anns, &combo, plan)?;
            attempt += 1;
            if !result.2.box_free || attempt >= MAX_ATTEMPTS {
                break result;
            }
        };
        if prov.box_free {
            warn!(
                "{}: every box was lost after {MAX_ATTEMPTS} attempts, emitting it without boxes",
                prov.image_id
            );
        }
        let record = record_for(&prov.image_id, &img);
        store(&record, &img)?;
        out.images.push(record);
        out.annotations.extend(boxes);
        out.provenance.push(prov);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub dataset: String,
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

/// Per-dataset object counts by size bucket, one row per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub buckets: SizeBuckets,
    pub rows: Vec<BucketRow>,
}

pub fn bucket_report(datasets: &[(&str, &Dataset)], buckets: &SizeBuckets) -> BucketReport {
    let rows = datasets
        .iter()
        .map(|(name, d)| {
            let SizeHistogram {
                small,
                medium,
                large,
            } = size_histogram(d, buckets);
            BucketRow {
                dataset: (*name).to_owned(),
                small,
                medium,
                large,
            }
        })
        .collect();
    BucketReport {
        buckets: *buckets,
        rows,
    }
}

/// `32²px` for perfect squares, `1000px²` otherwise.
fn area_label(area: f64) -> String {
    let side = area.sqrt();
    if side.fract() == 0.0 {
        format!("{}²px", side as u64)
    } else {
        format!("{area}px²")
    }
}

impl BucketReport {
    pub fn headers(&self) -> [String; 4] {
        let s = area_label(self.buckets.small_max_area);
        let l = area_label(self.buckets.large_min_area);
        [
            "Dataset".to_owned(),
            format!("Small Pores (pore<{s})"),
            format!("Medium Pores ({s}<pore<{l})"),
            format!("Large Pores (pore>{l})"),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,small,medium,large\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", csv_field(&r.dataset), r.small, r.medium, r.large));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

impl fmt::Display for BucketReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let headers = self.headers();
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.dataset.clone(),
                    r.small.to_string(),
                    r.medium.to_string(),
                    r.large.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..4)
            .map(|c| {
                cells
                    .iter()
                    .map(|row| row[c].chars().count())
                    .chain([headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |f: &mut fmt::Formatter<'_>, row: &[String; 4]| -> fmt::Result {
            write!(f, "| {:<w$} |", row[0], w = widths[0])?;
            for c in 1..4 {
                let pad = widths[c] - row[c].chars().count();
                write!(f, " {}{} |", " ".repeat(pad), row[c])?;
            }
            writeln!(f)
        };
        let rule = widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("+");
        writeln!(f, "+{rule}+")?;
        line(f, &headers)?;
        writeln!(f, "+{rule}+")?;
        for row in &cells {
            line(f, row)?;
        }
        writeln!(f, "+{rule}+")
    }
}
