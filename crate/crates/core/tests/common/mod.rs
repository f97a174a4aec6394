//! Brute-force reference evaluator and random instance generator shared by
//! the integration tests.
//!
//! The reference deliberately re-derives everything from first principles:
//! its own IoU, its own bucket rule, one full re-match per (threshold, cap),
//! an explicit suffix-max envelope and a linear scan for each recall point.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weldqa_core::{Annotation, BBox, Dataset, Detection, ImageRecord};

pub const THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const CAPS: [usize; 3] = [1, 10, 100];

#[derive(Debug, Clone, Copy)]
pub struct RBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl RBox {
    fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    fn iou(&self, o: &RBox) -> f64 {
        let iw = self.x1.min(o.x1) - self.x0.max(o.x0);
        let ih = self.y1.min(o.y1) - self.y0.max(o.y0);
        let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
        let union = self.area() + o.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

fn rbox(b: &BBox) -> RBox {
    RBox {
        x0: b.x_min,
        y0: b.y_min,
        x1: b.x_max,
        y1: b.y_max,
    }
}

/// bucket 0 all, 1 small (< 32²), 2 medium (32²..=64²), 3 large (> 64²)
fn in_bucket(b: &RBox, bucket: usize) -> bool {
    let a = b.area();
    match bucket {
        0 => true,
        1 => a < 1024.0,
        2 => (1024.0..=4096.0).contains(&a),
        3 => a > 4096.0,
        _ => unreachable!(),
    }
}

pub struct Reference {
    /// `[t][bucket]`, class mean, at the largest cap.
    pub ap: Vec<Vec<f64>>,
    /// `[cap][bucket]`, mean over thresholds and classes.
    pub ar: Vec<Vec<f64>>,
}

struct Cell {
    ap: Option<f64>,
    recall: Option<f64>,
}

/// One class, one bucket, one threshold, one cap.
fn reference_cell(
    gts: &[(String, RBox)],
    dets: &[(usize, String, RBox, f64)],
    images: &[String],
    bucket: usize,
    thr: f64,
    cap: usize,
) -> Cell {
    let npig = gts.iter().filter(|(_, b)| in_bucket(b, bucket)).count();
    if npig == 0 {
        return Cell {
            ap: None,
            recall: None,
        };
    }
    // (score, input index, true positive) of every counted detection
    let mut pooled: Vec<(f64, usize, bool)> = Vec::new();
    for img in images {
        let mut mine: Vec<&(usize, String, RBox, f64)> =
            dets.iter().filter(|d| &d.1 == img).collect();
        // stable: equal scores keep input order
        mine.sort_by(|a, b| b.3.partial_cmp(&a.3).unwrap());
        mine.truncate(cap);
        let g: Vec<&RBox> = gts.iter().filter(|(i, _)| i == img).map(|(_, b)| b).collect();
        let mut used = vec![false; g.len()];
        for d in mine {
            // in-bucket ground truth first, then out-of-bucket
            let mut hit: Option<usize> = None;
            for want_in in [true, false] {
                let mut best = -1.0;
                for (k, gb) in g.iter().enumerate() {
                    if used[k] || in_bucket(gb, bucket) != want_in {
                        continue;
                    }
                    let v = d.2.iou(gb);
                    if v >= thr && v > best {
                        best = v;
                        hit = Some(k);
                    }
                }
                if hit.is_some() {
                    break;
                }
            }
            match hit {
                Some(k) => {
                    used[k] = true;
                    if in_bucket(g[k], bucket) {
                        pooled.push((d.3, d.0, true));
                    }
                }
                None => {
                    if in_bucket(&d.2, bucket) {
                        pooled.push((d.3, d.0, false));
                    }
                }
            }
        }
    }
    pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let mut prec = Vec::new();
    let mut rec = Vec::new();
    let mut tp = 0usize;
    for (n, p) in pooled.iter().enumerate() {
        if p.2 {
            tp += 1;
        }
        prec.push(tp as f64 / (n + 1) as f64);
        rec.push(tp as f64 / npig as f64);
    }
    let env: Vec<f64> = (0..prec.len())
        .map(|i| prec[i..].iter().cloned().fold(f64::MIN, f64::max))
        .collect();
    let mut sum = 0.0;
    for j in 0..=100 {
        let r = j as f64 / 100.0;
        let mut v = 0.0;
        for i in 0..rec.len() {
            if rec[i] >= r {
                v = env[i];
                break;
            }
        }
        sum += v;
    }
    Cell {
        ap: Some(sum / 101.0),
        recall: Some(tp as f64 / npig as f64),
    }
}

fn mean_some(v: &[Option<f64>]) -> Option<f64> {
    let got: Vec<f64> = v.iter().flatten().copied().collect();
    if got.is_empty() {
        None
    } else {
        Some(got.iter().sum::<f64>() / got.len() as f64)
    }
}

pub fn reference_evaluate(dets: &[Detection], d: &Dataset) -> Reference {
    let mut images: Vec<String> = d.images.iter().map(|i| i.image_id.clone()).collect();
    for det in dets {
        if !images.contains(&det.image_id) {
            images.push(det.image_id.clone());
        }
    }
    let mut classes: Vec<String> = d
        .annotations
        .iter()
        .map(|a| a.label.clone())
        .chain(dets.iter().map(|x| x.label.clone()))
        .collect();
    classes.sort();
    classes.dedup();

    let top = CAPS.len() - 1;
    // [class][t][cap][bucket]
    let mut cells: Vec<Vec<Vec<Vec<Cell>>>> = Vec::new();
    for c in &classes {
        let gts: Vec<(String, RBox)> = d
            .annotations
            .iter()
            .filter(|a| &a.label == c)
            .map(|a| (a.image_id.clone(), rbox(&a.bbox)))
            .collect();
        let ds: Vec<(usize, String, RBox, f64)> = dets
            .iter()
            .enumerate()
            .filter(|(_, x)| &x.label == c)
            .map(|(i, x)| (i, x.image_id.clone(), rbox(&x.bbox), x.score))
            .collect();
        cells.push(
            THRESHOLDS
                .iter()
                .map(|&t| {
                    CAPS.iter()
                        .map(|&m| (0..4).map(|b| reference_cell(&gts, &ds, &images, b, t, m)).collect())
                        .collect()
                })
                .collect(),
        );
    }

    let ap = (0..THRESHOLDS.len())
        .map(|t| {
            (0..4)
                .map(|b| {
                    let per: Vec<Option<f64>> = cells.iter().map(|c| c[t][top][b].ap).collect();
                    mean_some(&per).unwrap_or(-1.0)
                })
                .collect()
        })
        .collect();
    let ar = (0..CAPS.len())
        .map(|m| {
            (0..4)
                .map(|b| {
                    let per: Vec<Option<f64>> = cells
                        .iter()
                        .map(|c| {
                            let over_t: Vec<Option<f64>> =
                                (0..THRESHOLDS.len()).map(|t| c[t][m][b].recall).collect();
                            mean_some(&over_t)
                        })
                        .collect();
                    mean_some(&per).unwrap_or(-1.0)
                })
                .collect()
        })
        .collect();
    Reference { ap, ar }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = rng.random_range(2..=110) as f64;
    let h = rng.random_range(2..=110) as f64;
    let x = rng.random_range(0..=(300 - w as i64)) as f64;
    let y = rng.random_range(0..=(300 - h as i64)) as f64;
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// A small random evaluation instance: up to 5 images with up to 3 ground
/// truth boxes and up to 4 detections each.
pub fn random_instance(seed: u64) -> (Dataset, Vec<Detection>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_img = rng.random_range(1..=5);
    let label = |rng: &mut ChaCha8Rng| if rng.random_bool(0.15) { "crack" } else { "pore" };
    let mut images = Vec::new();
    let mut anns = Vec::new();
    let mut dets = Vec::new();
    for i in 0..n_img {
        let id = format!("img{i}");
        images.push(ImageRecord {
            image_id: id.clone(),
            file_path: format!("{id}.png").into(),
            width: 300,
            height: 300,
            channels: 3,
        });
        let mine: Vec<Annotation> = (0..rng.random_range(0..=3))
            .map(|_| Annotation::new(id.clone(), label(&mut rng), random_box(&mut rng)))
            .collect();
        for _ in 0..rng.random_range(0..=4) {
            let bbox = if !mine.is_empty() && rng.random_bool(0.7) {
                // jittered copy of a ground truth box
                let g = mine[rng.random_range(0..mine.len())].bbox;
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-6..=6) as f64;
                let x0 = (g.x_min + j(&mut rng)).clamp(0.0, 298.0);
                let y0 = (g.y_min + j(&mut rng)).clamp(0.0, 298.0);
                let x1 = (g.x_max + j(&mut rng)).clamp(x0 + 1.0, 300.0);
                let y1 = (g.y_max + j(&mut rng)).clamp(y0 + 1.0, 300.0);
                BBox::new(x0, y0, x1, y1).unwrap()
            } else {
                random_box(&mut rng)
            };
            // coarse scores make ties common
            let score = rng.random_range(1..=10) as f64 / 10.0;
            let img = if rng.random_bool(0.05) { "ghost".to_owned() } else { id.clone() };
            dets.push(Detection::new(img, label(&mut rng), bbox, score));
        }
        anns.extend(mine);
    }
    (Dataset::new(images, anns), dets)
}
