//! Per-image accept/reject decisions from calibrated pore sizes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::csv_field;
use crate::dataset::Detection;
use crate::error::{Error, Result};

/// Pixels per millimetre on the work-piece surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    pub px_per_mm: f64,
    pub measure: SizeMeasure,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            px_per_mm: 40.0,
            measure: SizeMeasure::LongerSide,
        }
    }
}

impl Calibration {
    pub fn new(px_per_mm: f64) -> Result<Self> {
        let c = Calibration {
            px_per_mm,
            ..Calibration::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.px_per_mm.is_finite() && self.px_per_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "px_per_mm must be positive, got {}",
                self.px_per_mm
            )));
        }
        Ok(())
    }
}

/// Which box extent counts as the pore size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMeasure {
    #[default]
    LongerSide,
    ShorterSide,
    SqrtArea,
}

impl FromStr for SizeMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longer_side" => Ok(SizeMeasure::LongerSide),
            "shorter_side" => Ok(SizeMeasure::ShorterSide),
            "sqrt_area" => Ok(SizeMeasure::SqrtArea),
            _ => Err(Error::InvalidConfig(format!(
                "unknown size measure {s:?} (expected longer_side, shorter_side or sqrt_area)"
            ))),
        }
    }
}

pub fn pore_size_mm(d: &Detection, c: &Calibration) -> f64 {
    let px = match c.measure {
        SizeMeasure::LongerSide => d.bbox.longer_side(),
        SizeMeasure::ShorterSide => d.bbox.shorter_side(),
        SizeMeasure::SqrtArea => d.bbox.area().sqrt(),
    };
    px / c.px_per_mm
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accept,
    Reject,
    NoDetection,
}

impl Decision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
            Decision::NoDetection => "no-detection",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub image_id: String,
    pub decision: Decision,
    /// 0 when no detection passed the score filter.
    pub largest_pore_mm: f64,
    /// The detection with the largest pore.
    pub trigger: Option<Detection>,
    pub threshold_mm: f64,
}

/// Assesses every image in `image_ids` plus any image referenced by a
/// detection. Verdicts come back sorted by image id.
pub fn assess(
    dets: &[Detection],
    image_ids: &[&str],
    threshold_mm: f64,
    min_score: f64,
    c: &Calibration,
) -> Result<Vec<Verdict>> {
    if !(threshold_mm.is_finite() && threshold_mm > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "threshold_mm must be positive, got {threshold_mm}"
        )));
    }
    if !(0.0..=1.0).contains(&min_score) {
        return Err(Error::InvalidConfig(format!(
            "min_score must lie in [0, 1], got {min_score}"
        )));
    }
    c.validate()?;

    let mut largest: BTreeMap<&str, Option<(f64, &Detection)>> =
        image_ids.iter().map(|id| (*id, None)).collect();
    for d in dets {
        let slot = largest.entry(d.image_id.as_str()).or_default();
        if d.score < min_score {
            continue;
        }
        let size = pore_size_mm(d, c);
        // first detection wins a tie
        if slot.map_or(true, |(s, _)| size > s) {
            *slot = Some((size, d));
        }
    }

    Ok(largest
        .into_iter()
        .map(|(id, best)| match best {
            None => Verdict {
                image_id: id.to_owned(),
                decision: Decision::NoDetection,
                largest_pore_mm: 0.0,
                trigger: None,
                threshold_mm,
            },
            Some((size, d)) => Verdict {
                image_id: id.to_owned(),
                decision: if size > threshold_mm {
                    Decision::Reject
                } else {
                    Decision::Accept
                },
                largest_pore_mm: size,
                trigger: Some(d.clone()),
                threshold_mm,
            },
        })
        .collect())
}

/// `image_id,decision,largest_pore_mm,score,threshold_mm`; score is blank
/// without a triggering detection.
pub fn verdicts_csv(verdicts: &[Verdict]) -> String {
    let mut out = String::from("image_id,decision,largest_pore_mm,score,threshold_mm\n");
    for v in verdicts {
        let score = v.trigger.as_ref().map(|d| d.score.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{score},{}\n",
            csv_field(&v.image_id),
            v.decision,
            v.largest_pore_mm,
            v.threshold_mm
        ));
    }
    out
}

pub fn verdict_summary(verdicts: &[Verdict]) -> String {
    let count = |d: Decision| verdicts.iter().filter(|v| v.decision == d).count();
    let mut s = format!(
        "{} image(s): {} accept, {} reject, {} no-detection\n",
        verdicts.len(),
        count(Decision::Accept),
        count(Decision::Reject),
        count(Decision::NoDetection)
    );
    for v in verdicts.iter().filter(|v| v.decision == Decision::Reject) {
        s.push_str(&format!(
            "  reject {}: {:.3} mm > {} mm\n",
            v.image_id, v.largest_pore_mm, v.threshold_mm
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use proptest::prelude::*;

    fn det(img: &str, w: f64, h: f64, score: f64) -> Detection {
        Detection::new(img, "pore", BBox::from_xywh(5.0, 5.0, w, h).unwrap(), score)
    }

    #[test]
    fn size_examples() {
        let c = Calibration::default();
        assert_eq!(pore_size_mm(&det("a", 40.0, 20.0, 1.0), &c), 1.0);
        assert_eq!(pore_size_mm(&det("a", 0.0, 0.0, 1.0), &c), 0.0);
        assert_eq!(pore_size_mm(&det("a", 100.0, 60.0, 1.0), &c), 2.5);
        let short = Calibration {
            measure: SizeMeasure::ShorterSide,
            ..c
        };
        assert_eq!(pore_size_mm(&det("a", 40.0, 20.0, 1.0), &short), 0.5);
        let sq = Calibration {
            measure: SizeMeasure::SqrtArea,
            ..c
        };
        assert_eq!(pore_size_mm(&det("a", 80.0, 20.0, 1.0), &sq), 1.0);
        assert!(Calibration::new(0.0).is_err());
    }

    #[test]
    fn assess_examples() {
        let c = Calibration::default();
        let v = assess(&[], &["a"], 1.0, 0.5, &c).unwrap();
        assert_eq!(v[0].decision, Decision::NoDetection);

        let one = [det("a", 40.0, 20.0, 0.9)];
        let v = assess(&one, &[], 0.5, 0.5, &c).unwrap();
        assert_eq!(v[0].decision, Decision::Reject);
        assert_eq!(v[0].largest_pore_mm, 1.0);
        assert_eq!(v[0].trigger.as_ref().unwrap().score, 0.9);

        let v = assess(&one, &[], 2.0, 0.5, &c).unwrap();
        assert_eq!(v[0].decision, Decision::Accept);

        // exactly at the threshold is not above it
        let v = assess(&one, &[], 1.0, 0.5, &c).unwrap();
        assert_eq!(v[0].decision, Decision::Accept);

        // filtered out by score
        let v = assess(&one, &[], 0.5, 0.95, &c).unwrap();
        assert_eq!(v[0].decision, Decision::NoDetection);

        assert!(assess(&one, &[], 0.0, 0.5, &c).is_err());
        assert!(assess(&one, &[], 1.0, 1.5, &c).is_err());
    }

    #[test]
    fn csv_format() {
        let c = Calibration::default();
        let dets = [det("b", 40.0, 20.0, 0.75)];
        let v = assess(&dets, &["a"], 0.5, 0.0, &c).unwrap();
        assert_eq!(
            verdicts_csv(&v),
            "image_id,decision,largest_pore_mm,score,threshold_mm\n\
             a,no-detection,0,,0.5\n\
             b,reject,1,0.75,0.5\n"
        );
        assert!(verdict_summary(&v).contains("1 reject"));
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0usize..4, 0.0f64..200.0, 0.0f64..200.0, 0.0f64..=1.0),
            0..12,
        )
        .prop_map(|v| {
            v.into_iter()
                .map(|(i, w, h, s)| det(&format!("img{i}"), w, h, s))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn raising_threshold_never_rejects_more(
            dets in arb_dets(), t in 0.01f64..5.0, dt in 0.0f64..5.0, s in 0.0f64..=1.0,
        ) {
            let c = Calibration::default();
            let lo = assess(&dets, &[], t, s, &c).unwrap();
            let hi = assess(&dets, &[], t + dt, s, &c).unwrap();
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(!(a.decision == Decision::Accept && b.decision == Decision::Reject));
            }
        }

        #[test]
        fn raising_min_score_never_rejects_more(
            dets in arb_dets(), t in 0.01f64..5.0, s in 0.0f64..=1.0, ds in 0.0f64..=1.0,
        ) {
            let c = Calibration::default();
            let lo = assess(&dets, &[], t, s, &c).unwrap();
            let hi = assess(&dets, &[], t, (s + ds).min(1.0), &c).unwrap();
            for (a, b) in lo.iter().zip(&hi) {
                prop_assert!(!(a.decision == Decision::Accept && b.decision == Decision::Reject));
            }
        }

        #[test]
        fn size_is_linear(w in 0.0f64..500.0, h in 0.0f64..500.0, k in 0.1f64..10.0, p in 1.0f64..100.0) {
            let base = pore_size_mm(&det("a", w, h, 1.0), &Calibration::new(p).unwrap());
            let scaled = pore_size_mm(&det("a", w * k, h * k, 1.0), &Calibration::new(p).unwrap());
            let finer = pore_size_mm(&det("a", w, h, 1.0), &Calibration::new(p * k).unwrap());
            prop_assert!((scaled - k * base).abs() <= 1e-9 * (1.0 + scaled.abs()));
            prop_assert!((finer - base / k).abs() <= 1e-9 * (1.0 + base.abs()));
        }
    }
}
