//! COCO-style detection evaluation.
//!
//! For every class, IoU threshold, size bucket and per-image detection cap:
//!
//! 1. Detections of each image are ranked by score (ties keep input order).
//! 2. Each detection, in rank order, takes the still-unmatched ground truth
//!    with the highest IoU, provided that IoU reaches the threshold. Ground
//!    truth outside the bucket is *ignored*: it can absorb a detection, but
//!    an in-bucket match is always preferred, and a detection matched to an
//!    ignored box counts neither as true nor false positive. Unmatched
//!    detections whose own area falls outside the bucket are ignored too.
//! 3. Detections are pooled over images and ranked again; cumulative
//!    precision is made non-increasing from the right and sampled at evenly
//!    spaced recall points. AP is the mean of the samples, recall is the
//!    final matched fraction of non-ignored ground truth.
//!
//! Cells without ground truth hold [`SENTINEL`] and are skipped when
//! averaging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::csv_field;
use crate::dataset::{Annotation, Dataset, Detection};
use crate::error::{Error, Result};
use crate::geometry::{BBox, SizeBuckets, SizeClass};

/// Value of a cell that has no ground truth.
pub const SENTINEL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub max_dets: Vec<usize>,
    pub buckets: SizeBuckets,
    /// Detections scoring below this are discarded before matching.
    pub score_floor: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            // written as exact hundredths so 0.60 is the double nearest 60/100
            iou_thresholds: (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect(),
            recall_points: 101,
            max_dets: vec![1, 10, 100],
            buckets: SizeBuckets::default(),
            score_floor: 0.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("no IoU thresholds".into()));
        }
        if self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::InvalidConfig("IoU thresholds must lie in (0, 1]".into()));
        }
        if self.iou_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("IoU thresholds must be strictly increasing".into()));
        }
        if self.recall_points < 2 {
            return Err(Error::InvalidConfig("need at least 2 recall points".into()));
        }
        if self.max_dets.is_empty()
            || self.max_dets.contains(&0)
            || self.max_dets.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(
                "max_dets must be positive and strictly increasing".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_floor) {
            return Err(Error::InvalidConfig("score_floor must lie in [0, 1]".into()));
        }
        SizeBuckets::new(self.buckets.small_max_area, self.buckets.large_min_area)?;
        Ok(())
    }

    /// `i / (recall_points − 1)` for each point.
    pub fn recall_grid(&self) -> Vec<f64> {
        let last = (self.recall_points - 1) as f64;
        (0..self.recall_points).map(|i| i as f64 / last).collect()
    }

    fn top_cap(&self) -> usize {
        *self.max_dets.last().expect("validated non-empty")
    }
}

/// Area range a cell is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    All,
    Small,
    Medium,
    Large,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::All, Bucket::Small, Bucket::Medium, Bucket::Large];

    pub fn as_str(&self) -> &'static str {
        match self {
            Bucket::All => "all",
            Bucket::Small => "small",
            Bucket::Medium => "medium",
            Bucket::Large => "large",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn contains(&self, b: &BBox, buckets: &SizeBuckets) -> bool {
        match self {
            Bucket::All => true,
            Bucket::Small => buckets.classify(b) == SizeClass::Small,
            Bucket::Medium => buckets.classify(b) == SizeClass::Medium,
            Bucket::Large => buckets.classify(b) == SizeClass::Large,
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Greedy matching of score-ranked detections to ground truth.
///
/// `gt_ignore` flags ground truth that may absorb a detection but should not
/// count. Returns, per detection, the index of the matched ground truth.
pub fn greedy_match(
    dets: &[BBox],
    gts: &[BBox],
    gt_ignore: &[bool],
    iou_thr: f64,
) -> Vec<Option<usize>> {
    debug_assert_eq!(gts.len(), gt_ignore.len());
    // non-ignored ground truth is tried first
    let mut order: Vec<usize> = (0..gts.len()).collect();
    order.sort_by_key(|&g| gt_ignore[g]);

    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for &g in &order {
                if taken[g] {
                    continue;
                }
                if let Some((m, _)) = best {
                    if !gt_ignore[m] && gt_ignore[g] {
                        break;
                    }
                }
                let iou = d.iou(&gts[g]);
                if iou < iou_thr {
                    continue;
                }
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            let m = best.map(|(g, _)| g);
            if let Some(g) = m {
                taken[g] = true;
            }
            m
        })
        .collect()
}

/// One detection after matching at a single threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    /// Position in the detection list handed to [`match_detections`].
    pub index: usize,
    pub score: f64,
    /// Index into the image's ground truth (in input order).
    pub gt: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    /// Detections in rank order.
    pub detections: Vec<MatchedDetection>,
    pub num_gt: usize,
    pub unmatched_gt: usize,
}

/// Matching result of one threshold over many images, keyed by image id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub iou_threshold: f64,
    pub images: BTreeMap<String, ImageMatches>,
}

impl MatchSet {
    pub fn num_gt(&self) -> usize {
        self.images.values().map(|m| m.num_gt).sum()
    }

    pub fn true_positives(&self) -> usize {
        self.images
            .values()
            .flat_map(|m| &m.detections)
            .filter(|d| d.gt.is_some())
            .count()
    }
}

/// Ranks by descending score, ties by ascending input index.
fn rank_order(scores: &[(f64, usize)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .0
            .total_cmp(&scores[a].0)
            .then(scores[a].1.cmp(&scores[b].1))
    });
    order
}

/// Matches detections to ground truth at one threshold, image by image.
/// Only boxes with the same label are compared. Images that appear only
/// among the detections are matched against no ground truth.
pub fn match_detections(dets: &[Detection], gts: &[Annotation], iou_thr: f64) -> MatchSet {
    let mut images: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        images.entry(d.image_id.as_str()).or_default().0.push(i);
    }
    for (i, g) in gts.iter().enumerate() {
        images.entry(g.image_id.as_str()).or_default().1.push(i);
    }

    let mut out = MatchSet {
        iou_threshold: iou_thr,
        images: BTreeMap::new(),
    };
    for (image_id, (det_idx, gt_idx)) in images {
        let keyed: Vec<(f64, usize)> = det_idx.iter().map(|&i| (dets[i].score, i)).collect();
        let ranked: Vec<usize> = rank_order(&keyed).into_iter().map(|k| det_idx[k]).collect();

        let mut assigned: Vec<Option<usize>> = vec![None; ranked.len()];
        let labels: BTreeSet<&str> = ranked
            .iter()
            .map(|&i| dets[i].label.as_str())
            .chain(gt_idx.iter().map(|&i| gts[i].label.as_str()))
            .collect();
        for label in labels {
            let d_pos: Vec<usize> = (0..ranked.len())
                .filter(|&p| dets[ranked[p]].label == label)
                .collect();
            let g_local: Vec<usize> = (0..gt_idx.len())
                .filter(|&p| gts[gt_idx[p]].label == label)
                .collect();
            let d_boxes: Vec<BBox> = d_pos.iter().map(|&p| dets[ranked[p]].bbox).collect();
            let g_boxes: Vec<BBox> = g_local.iter().map(|&p| gts[gt_idx[p]].bbox).collect();
            let m = greedy_match(&d_boxes, &g_boxes, &vec![false; g_boxes.len()], iou_thr);
            for (k, gm) in m.into_iter().enumerate() {
                assigned[d_pos[k]] = gm.map(|g| g_local[g]);
            }
        }
        let matched = assigned.iter().filter(|a| a.is_some()).count();
        out.images.insert(
            image_id.to_owned(),
            ImageMatches {
                detections: ranked
                    .iter()
                    .zip(assigned)
                    .map(|(&i, gt)| MatchedDetection {
                        index: i,
                        score: dets[i].score,
                        gt,
                    })
                    .collect(),
                num_gt: gt_idx.len(),
                unmatched_gt: gt_idx.len() - matched,
            },
        );
    }
    out
}

/// Interpolated precision at each recall point, given pooled detections as
/// `(score, input_index, is_true_positive)`. `None` when `num_gt` is zero.
pub fn interpolated_precision(
    pooled: &[(f64, usize, bool)],
    num_gt: usize,
    recall_grid: &[f64],
) -> Option<Vec<f64>> {
    if num_gt == 0 {
        return None;
    }
    let keys: Vec<(f64, usize)> = pooled.iter().map(|p| (p.0, p.1)).collect();
    let order = rank_order(&keys);
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    for (n, &i) in order.iter().enumerate() {
        tp += pooled[i].2 as usize;
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (n + 1) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    Some(
        recall_grid
            .iter()
            .map(|&r| {
                let i = recall.partition_point(|&rc| rc < r);
                precision.get(i).copied().unwrap_or(0.0)
            })
            .collect(),
    )
}

/// Interpolated precision of a [`MatchSet`] over `num_gt` ground truth.
pub fn pr_curve(m: &MatchSet, num_gt: usize, recall_points: usize) -> Option<Vec<f64>> {
    let last = (recall_points.max(2) - 1) as f64;
    let grid: Vec<f64> = (0..recall_points.max(2)).map(|i| i as f64 / last).collect();
    let pooled: Vec<(f64, usize, bool)> = m
        .images
        .values()
        .flat_map(|im| &im.detections)
        .map(|d| (d.score, d.index, d.gt.is_some()))
        .collect();
    interpolated_precision(&pooled, num_gt, &grid)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean of the non-sentinel values, or the sentinel when there are none.
fn mean_valid(values: impl IntoIterator<Item = f64>) -> f64 {
    let valid: Vec<f64> = values.into_iter().filter(|v| *v > SENTINEL).collect();
    if valid.is_empty() {
        SENTINEL
    } else {
        mean(&valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassResult {
    /// `[iou][bucket]` at the largest detection cap.
    pub ap: Vec<Vec<f64>>,
    /// `[max_det][bucket]`, averaged over IoU thresholds.
    pub ar: Vec<Vec<f64>>,
    /// `[iou][max_det][bucket]`.
    pub recall: Vec<Vec<Vec<f64>>>,
    /// Non-ignored ground truth per bucket.
    pub num_gt: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub iou_thresholds: Vec<f64>,
    pub max_dets: Vec<usize>,
    pub buckets: Vec<Bucket>,
    /// `[iou][bucket]` at the largest cap, averaged over classes.
    pub ap: Vec<Vec<f64>>,
    /// `[max_det][bucket]`, averaged over IoU thresholds and classes.
    pub ar: Vec<Vec<f64>>,
    /// Mean AP over thresholds, all sizes.
    pub m_ap: f64,
    /// AP at IoU 0.50 (sentinel when 0.50 is not a configured threshold).
    pub ap_50: f64,
    /// Mean AR at a cap of 100 detections (or the largest cap if 100 is not
    /// configured), all sizes.
    pub m_ar_100: f64,
    /// Mean AP over thresholds for each bucket.
    pub m_ap_by_bucket: Vec<f64>,
    /// `m_ar_100` for each bucket.
    pub m_ar_by_bucket: Vec<f64>,
    pub per_class: BTreeMap<String, ClassResult>,
    /// Image ids referenced by detections but absent from the dataset.
    pub unknown_image_ids: Vec<String>,
}

impl EvalResult {
    pub fn ap_at(&self, iou_index: usize, bucket: Bucket) -> f64 {
        self.ap[iou_index][bucket.index()]
    }

    pub fn ar_at(&self, max_det_index: usize, bucket: Bucket) -> f64 {
        self.ar[max_det_index][bucket.index()]
    }

    fn ar_summary_index(&self) -> usize {
        self.max_dets
            .iter()
            .position(|&m| m == 100)
            .unwrap_or(self.max_dets.len() - 1)
    }

    /// Every cell as `(metric, iou, bucket, max_det, value)`, one per CSV
    /// row. `iou` is blank for values averaged over thresholds.
    pub fn cells(&self) -> Vec<(&'static str, String, Bucket, usize, f64)> {
        let top = *self.max_dets.last().unwrap_or(&0);
        let ar_cap = self.max_dets.get(self.ar_summary_index()).copied().unwrap_or(0);
        let mut out = Vec::new();
        for (b, bucket) in self.buckets.iter().enumerate() {
            for (t, thr) in self.iou_thresholds.iter().enumerate() {
                out.push(("ap", format!("{thr:.2}"), *bucket, top, self.ap[t][b]));
            }
            for (m, cap) in self.max_dets.iter().enumerate() {
                out.push(("ar", String::new(), *bucket, *cap, self.ar[m][b]));
            }
            out.push(("m_ap", String::new(), *bucket, top, self.m_ap_by_bucket[b]));
            out.push(("m_ar", String::new(), *bucket, ar_cap, self.m_ar_by_bucket[b]));
        }
        out.push(("ap_50", "0.50".into(), Bucket::All, top, self.ap_50));
        out
    }

    /// Flat CSV: `run,metric,iou,bucket,max_det,value`.
    pub fn to_csv(&self, run: &str) -> String {
        let mut out = String::from("run,metric,iou,bucket,max_det,value\n");
        for (metric, iou, bucket, cap, value) in self.cells() {
            out.push_str(&format!(
                "{},{metric},{iou},{bucket},{cap},{value}\n",
                csv_field(run)
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fmtv = |v: f64| {
            if v == SENTINEL {
                "   n/a".to_owned()
            } else {
                format!("{v:6.3}")
            }
        };
        let top = self.max_dets.last().copied().unwrap_or(0);
        let ar_cap = self.max_dets[self.ar_summary_index()];
        s.push_str(&format!("AP  @[IoU=0.50:0.95 | area=   all | maxDets={top:>3}] = {}\n", fmtv(self.m_ap)));
        s.push_str(&format!("AP  @[IoU=0.50      | area=   all | maxDets={top:>3}] = {}\n", fmtv(self.ap_50)));
        for b in [Bucket::Small, Bucket::Medium, Bucket::Large] {
            s.push_str(&format!(
                "AP  @[IoU=0.50:0.95 | area={:>6} | maxDets={top:>3}] = {}\n",
                b.as_str(),
                fmtv(self.m_ap_by_bucket[b.index()])
            ));
        }
        for (m, cap) in self.max_dets.iter().enumerate() {
            s.push_str(&format!(
                "AR  @[IoU=0.50:0.95 | area=   all | maxDets={cap:>3}] = {}\n",
                fmtv(self.ar[m][Bucket::All.index()])
            ));
        }
        for b in [Bucket::Small, Bucket::Medium, Bucket::Large] {
            s.push_str(&format!(
                "AR  @[IoU=0.50:0.95 | area={:>6} | maxDets={ar_cap:>3}] = {}\n",
                b.as_str(),
                fmtv(self.m_ar_by_bucket[b.index()])
            ));
        }
        if !self.unknown_image_ids.is_empty() {
            s.push_str(&format!(
                "{} detection image id(s) not in the dataset: {}\n",
                self.unknown_image_ids.len(),
                self.unknown_image_ids.join(", ")
            ));
        }
        s
    }
}

/// One detection after matching, as seen by accumulation.
#[derive(Debug, Clone, Copy)]
struct Scored {
    score: f64,
    index: usize,
    /// Rank within its image.
    rank: usize,
    matched: bool,
    ignored: bool,
}

/// Per (image, class): matching outcome for each bucket and threshold.
struct ImageEval {
    /// `[bucket][iou]`
    dets: Vec<Vec<Vec<Scored>>>,
    /// Non-ignored ground truth per bucket.
    num_gt: Vec<usize>,
}

fn evaluate_image(
    dets: &[(usize, &Detection)],
    gts: &[&Annotation],
    cfg: &EvalConfig,
) -> ImageEval {
    let keys: Vec<(f64, usize)> = dets.iter().map(|(i, d)| (d.score, *i)).collect();
    let mut ranked: Vec<(usize, &Detection)> = rank_order(&keys).into_iter().map(|k| dets[k]).collect();
    ranked.truncate(cfg.top_cap());
    let det_boxes: Vec<BBox> = ranked.iter().map(|(_, d)| d.bbox).collect();
    let gt_boxes: Vec<BBox> = gts.iter().map(|g| g.bbox).collect();

    let mut out = ImageEval {
        dets: Vec::with_capacity(Bucket::ALL.len()),
        num_gt: Vec::with_capacity(Bucket::ALL.len()),
    };
    for bucket in Bucket::ALL {
        let gt_ignore: Vec<bool> = gt_boxes
            .iter()
            .map(|b| !bucket.contains(b, &cfg.buckets))
            .collect();
        out.num_gt.push(gt_ignore.iter().filter(|i| !**i).count());
        let per_thr = cfg
            .iou_thresholds
            .iter()
            .map(|&thr| {
                let m = greedy_match(&det_boxes, &gt_boxes, &gt_ignore, thr);
                ranked
                    .iter()
                    .zip(m)
                    .enumerate()
                    .map(|(rank, ((index, d), gm))| Scored {
                        score: d.score,
                        index: *index,
                        rank,
                        matched: gm.is_some(),
                        ignored: match gm {
                            Some(g) => gt_ignore[g],
                            None => !bucket.contains(&d.bbox, &cfg.buckets),
                        },
                    })
                    .collect()
            })
            .collect();
        out.dets.push(per_thr);
    }
    out
}

/// Evaluates detections against the dataset's ground truth.
pub fn evaluate(dets: &[Detection], dataset: &Dataset, cfg: &EvalConfig) -> Result<EvalResult> {
    cfg.validate()?;
    let kept: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.score >= cfg.score_floor)
        .collect();

    let known: BTreeSet<&str> = dataset.images.iter().map(|i| i.image_id.as_str()).collect();
    let unknown: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    let mut image_ids: Vec<&str> = known.iter().copied().collect();
    image_ids.extend(unknown.iter().copied());

    let classes: BTreeSet<&str> = dataset
        .annotations
        .iter()
        .map(|a| a.label.as_str())
        .chain(kept.iter().map(|(_, d)| d.label.as_str()))
        .collect();

    let mut gt_by: BTreeMap<(&str, &str), Vec<&Annotation>> = BTreeMap::new();
    for a in &dataset.annotations {
        gt_by.entry((a.image_id.as_str(), a.label.as_str())).or_default().push(a);
    }
    let mut det_by: BTreeMap<(&str, &str), Vec<(usize, &Detection)>> = BTreeMap::new();
    for &(i, d) in &kept {
        det_by.entry((d.image_id.as_str(), d.label.as_str())).or_default().push((i, d));
    }

    let grid = cfg.recall_grid();
    let n_t = cfg.iou_thresholds.len();
    let n_m = cfg.max_dets.len();
    let n_b = Bucket::ALL.len();

    let mut per_class = BTreeMap::new();
    for class in &classes {
        let evals: Vec<ImageEval> = image_ids
            .par_iter()
            .map(|img| {
                let d = det_by.get(&(*img, *class)).map_or(&[][..], |v| v);
                let g = gt_by.get(&(*img, *class)).map_or(&[][..], |v| v);
                evaluate_image(d, g, cfg)
            })
            .collect();

        let mut ap = vec![vec![SENTINEL; n_b]; n_t];
        let mut recall = vec![vec![vec![SENTINEL; n_b]; n_m]; n_t];
        let mut num_gt = vec![0usize; n_b];
        for b in 0..n_b {
            let npig: usize = evals.iter().map(|e| e.num_gt[b]).sum();
            num_gt[b] = npig;
            if npig == 0 {
                continue;
            }
            for t in 0..n_t {
                for (m, &cap) in cfg.max_dets.iter().enumerate() {
                    let pooled: Vec<(f64, usize, bool)> = evals
                        .iter()
                        .flat_map(|e| &e.dets[b][t])
                        .filter(|s| s.rank < cap && !s.ignored)
                        .map(|s| (s.score, s.index, s.matched))
                        .collect();
                    let tp = pooled.iter().filter(|p| p.2).count();
                    recall[t][m][b] = tp as f64 / npig as f64;
                    if m == n_m - 1 {
                        let q = interpolated_precision(&pooled, npig, &grid)
                            .expect("ground truth present");
                        ap[t][b] = mean(&q);
                    }
                }
            }
        }
        let ar = (0..n_m)
            .map(|m| (0..n_b).map(|b| mean_valid((0..n_t).map(|t| recall[t][m][b]))).collect())
            .collect();
        per_class.insert(
            (*class).to_owned(),
            ClassResult {
                ap,
                ar,
                recall,
                num_gt,
            },
        );
    }

    let ap: Vec<Vec<f64>> = (0..n_t)
        .map(|t| {
            (0..n_b)
                .map(|b| mean_valid(per_class.values().map(|c: &ClassResult| c.ap[t][b])))
                .collect()
        })
        .collect();
    let ar: Vec<Vec<f64>> = (0..n_m)
        .map(|m| {
            (0..n_b)
                .map(|b| mean_valid(per_class.values().map(|c: &ClassResult| c.ar[m][b])))
                .collect()
        })
        .collect();

    let m_ap_by_bucket: Vec<f64> = (0..n_b).map(|b| mean_valid((0..n_t).map(|t| ap[t][b]))).collect();
    let ar_idx = cfg
        .max_dets
        .iter()
        .position(|&m| m == 100)
        .unwrap_or(n_m - 1);
    let m_ar_by_bucket: Vec<f64> = (0..n_b).map(|b| ar[ar_idx][b]).collect();
    let ap_50 = cfg
        .iou_thresholds
        .iter()
        .position(|t| (t - 0.5).abs() < 1e-12)
        .map_or(SENTINEL, |t| ap[t][Bucket::All.index()]);

    Ok(EvalResult {
        iou_thresholds: cfg.iou_thresholds.clone(),
        max_dets: cfg.max_dets.clone(),
        buckets: Bucket::ALL.to_vec(),
        m_ap: m_ap_by_bucket[Bucket::All.index()],
        ap_50,
        m_ar_100: m_ar_by_bucket[Bucket::All.index()],
        ap,
        ar,
        m_ap_by_bucket,
        m_ar_by_bucket,
        per_class,
        unknown_image_ids: unknown.into_iter().map(str::to_owned).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: String,
    pub m_ap: f64,
    pub ap_50: f64,
    pub m_ar_100: f64,
    /// Mean AP over thresholds for small, medium, large.
    pub ap_by_size: [f64; 3],
    /// `m_ar_100` for small, medium, large.
    pub ar_by_size: [f64; 3],
}

/// AP as a function of IoU threshold for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSeries {
    pub run: String,
    pub iou: Vec<f64>,
    pub ap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub series: Vec<ApSeries>,
}

pub fn compare_runs(results: &[(String, EvalResult)]) -> Comparison {
    let sized = [Bucket::Small, Bucket::Medium, Bucket::Large];
    let rows = results
        .iter()
        .map(|(run, r)| ComparisonRow {
            run: run.clone(),
            m_ap: r.m_ap,
            ap_50: r.ap_50,
            m_ar_100: r.m_ar_100,
            ap_by_size: sized.map(|b| r.m_ap_by_bucket[b.index()]),
            ar_by_size: sized.map(|b| r.m_ar_by_bucket[b.index()]),
        })
        .collect();
    let series = results
        .iter()
        .map(|(run, r)| ApSeries {
            run: run.clone(),
            iou: r.iou_thresholds.clone(),
            ap: r.ap.iter().map(|row| row[Bucket::All.index()]).collect(),
        })
        .collect();
    Comparison { rows, series }
}

impl Comparison {
    const COLUMNS: [&'static str; 10] = [
        "run", "m_ap", "ap_50", "m_ar_100", "ap_small", "ap_medium", "ap_large", "ar_small",
        "ar_medium", "ar_large",
    ];

    fn values(row: &ComparisonRow) -> [f64; 9] {
        [
            row.m_ap,
            row.ap_50,
            row.m_ar_100,
            row.ap_by_size[0],
            row.ap_by_size[1],
            row.ap_by_size[2],
            row.ar_by_size[0],
            row.ar_by_size[1],
            row.ar_by_size[2],
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&csv_field(&row.run));
            for v in Self::values(row) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Long-form `run,iou,ap` rows for plotting AP against IoU.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("run,iou,ap\n");
        for s in &self.series {
            for (t, ap) in s.iou.iter().zip(&s.ap) {
                out.push_str(&format!("{},{t:.2},{ap}\n", csv_field(&s.run)));
            }
        }
        out
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name_w = self
            .rows
            .iter()
            .map(|r| r.run.chars().count())
            .chain([3])
            .max()
            .unwrap_or(3);
        write!(f, "{:<name_w$}", Self::COLUMNS[0])?;
        for c in &Self::COLUMNS[1..] {
            write!(f, " {c:>9}")?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<name_w$}", row.run)?;
            for v in Self::values(row) {
                if v == SENTINEL {
                    write!(f, " {:>9}", "n/a")?;
                } else {
                    write!(f, " {v:>9.3}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
