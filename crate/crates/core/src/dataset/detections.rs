//! Newline-delimited JSON detections.
//!
//! One record per line:
//!
//! ```text
//! {"image_id": "img1", "label": "pore", "bbox": [10, 10, 20, 20], "score": 0.9}
//! ```
//!
//! `bbox` is `[x, y, width, height]` in pixels; it is converted to corner form
//! on load. Blank lines are skipped and do not count as records.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub label: String,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, label: impl Into<String>, bbox: BBox, score: f64) -> Self {
        Detection {
            image_id: image_id.into(),
            label: label.into(),
            bbox,
            score,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    image_id: String,
    label: String,
    bbox: [f64; 4],
    score: f64,
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text).map_err(|(record, message)| Error::Detection {
        path: path.to_owned(),
        record,
        message,
    })
}

/// Parses detections text. On failure returns the offending record index and
/// a message.
pub fn parse_detections(text: &str) -> std::result::Result<Vec<Detection>, (usize, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| parse_record(line).map_err(|m| (i, m)))
        .collect()
}

fn parse_record(line: &str) -> std::result::Result<Detection, String> {
    let r: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&r.score) {
        return Err(format!("score {} outside [0, 1]", r.score));
    }
    let [x, y, w, h] = r.bbox;
    if w < 0.0 || h < 0.0 {
        return Err(format!("negative box size {w}x{h}"));
    }
    let bbox = BBox::from_xywh(x, y, w, h).map_err(|e| e.to_string())?;
    Ok(Detection {
        image_id: r.image_id,
        label: r.label,
        bbox,
        score: r.score,
    })
}

pub fn render_detections(dets: &[Detection]) -> String {
    let mut out = String::new();
    for d in dets {
        let r = Record {
            image_id: d.image_id.clone(),
            label: d.label.clone(),
            bbox: [d.bbox.x_min, d.bbox.y_min, d.bbox.width(), d.bbox.height()],
            score: d.score,
        };
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(render_detections(dets).as_bytes())
        .map_err(|e| Error::io(path, e))
}
