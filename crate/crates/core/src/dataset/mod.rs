//! Dataset model, size statistics and deterministic splits.
//!
//! Annotation documents are read and written by [`voc`]; detector output by
//! [`detections`].

pub mod detections;
pub mod voc;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, SizeBuckets, SizeClass};

pub use detections::{load_detections, parse_detections, render_detections, write_detections, Detection};
pub use voc::{load_voc, write_voc};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub file_path: PathBuf,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub label: String,
    #[serde(rename = "bbox")]
    pub bbox: BBox,
}

impl Annotation {
    pub fn new(image_id: impl Into<String>, label: impl Into<String>, bbox: BBox) -> Self {
        Annotation {
            image_id: image_id.into(),
            label: label.into(),
            bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    #[default]
    Unsplit,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::Unsplit => "unsplit",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<Annotation>,
    pub split_tag: SplitTag,
}

impl Dataset {
    pub fn new(images: Vec<ImageRecord>, annotations: Vec<Annotation>) -> Self {
        Dataset {
            images,
            annotations,
            split_tag: SplitTag::Unsplit,
        }
    }

    /// Checks the structural invariants: unique image ids, positive
    /// dimensions, 1 or 3 channels, non-empty labels, valid boxes, and every
    /// annotation pointing at a known image.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for img in &self.images {
            if !ids.insert(img.image_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate image id {:?}",
                    img.image_id
                )));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::InvalidDataset(format!(
                    "image {:?} has zero size",
                    img.image_id
                )));
            }
            if img.channels != 1 && img.channels != 3 {
                return Err(Error::InvalidDataset(format!(
                    "image {:?} has {} channels",
                    img.image_id, img.channels
                )));
            }
        }
        for ann in &self.annotations {
            if !ids.contains(ann.image_id.as_str()) {
                return Err(Error::InvalidDataset(format!(
                    "annotation references unknown image {:?}",
                    ann.image_id
                )));
            }
            if ann.label.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "empty label on image {:?}",
                    ann.image_id
                )));
            }
            if !ann.bbox.is_valid() {
                return Err(Error::InvalidDataset(format!(
                    "invalid box on image {:?}",
                    ann.image_id
                )));
            }
        }
        Ok(())
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Annotations of one image, in dataset order.
    pub fn annotations_for<'a>(&'a self, image_id: &'a str) -> impl Iterator<Item = &'a Annotation> {
        self.annotations.iter().filter(move |a| a.image_id == image_id)
    }

    /// Groups annotations by image id.
    pub fn annotations_by_image(&self) -> BTreeMap<&str, Vec<&Annotation>> {
        let mut out: BTreeMap<&str, Vec<&Annotation>> = self
            .images
            .iter()
            .map(|i| (i.image_id.as_str(), Vec::new()))
            .collect();
        for a in &self.annotations {
            out.entry(a.image_id.as_str()).or_default().push(a);
        }
        out
    }

    /// Keeps the listed images (in the given order) and their annotations.
    fn subset(&self, ids: &[&str], tag: SplitTag) -> Dataset {
        let by_image = self.annotations_by_image();
        let mut images = Vec::with_capacity(ids.len());
        let mut annotations = Vec::new();
        for id in ids {
            if let Some(img) = self.image(id) {
                images.push(img.clone());
                annotations.extend(by_image.get(id).into_iter().flatten().map(|a| (*a).clone()));
            }
        }
        Dataset {
            images,
            annotations,
            split_tag: tag,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub small: usize,
    pub medium: usize,
    pub large: usize,
}

impl SizeHistogram {
    pub fn total(&self) -> usize {
        self.small + self.medium + self.large
    }

    pub fn add(&mut self, class: SizeClass) {
        match class {
            SizeClass::Small => self.small += 1,
            SizeClass::Medium => self.medium += 1,
            SizeClass::Large => self.large += 1,
        }
    }
}

pub fn size_histogram(d: &Dataset, buckets: &SizeBuckets) -> SizeHistogram {
    let mut h = SizeHistogram::default();
    for a in &d.annotations {
        h.add(buckets.classify(&a.bbox));
    }
    h
}

/// Train/val/test proportions. Must be non-negative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        let parts = [train, val, test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "split ratios must be non-negative, got {train},{val},{test}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "split ratios must sum to 1, got {train},{val},{test}"
            )));
        }
        Ok(r)
    }

    /// Number of images per part: each part gets `floor(ratio · n)`, then the
    /// leftover images are handed out one at a time in train, val, test order.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let ratios = [self.train, self.val, self.test];
        // The epsilon keeps 0.8·10 from flooring to 7 on representation error.
        let mut counts = ratios.map(|r| ((r * n as f64) + 1e-9).floor() as usize);
        let mut assigned: usize = counts.iter().sum();
        while assigned > n {
            // only reachable through the epsilon; take back from the end
            if let Some(c) = counts.iter_mut().rev().find(|c| **c > 0) {
                *c -= 1;
            }
            assigned -= 1;
        }
        let mut i = 0;
        while assigned < n {
            if ratios[i % 3] > 0.0 || ratios.iter().all(|r| *r == 0.0) {
                counts[i % 3] += 1;
                assigned += 1;
            }
            i += 1;
        }
        counts
    }
}

/// Deterministic partition of `d` by a seeded shuffle of its image ids.
///
/// Images travel with all of their annotations. Within each part, images
/// keep the shuffled order.
pub fn split(d: &Dataset, ratios: SplitRatios, seed: u64) -> (Dataset, Dataset, Dataset) {
    let mut ids: Vec<&str> = d.images.iter().map(|i| i.image_id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let [n_train, n_val, _] = ratios.counts(ids.len());
    let (train, rest) = ids.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    (
        d.subset(train, SplitTag::Train),
        d.subset(val, SplitTag::Val),
        d.subset(test, SplitTag::Test),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic(n: usize) -> Dataset {
        let images = (0..n)
            .map(|i| ImageRecord {
                image_id: format!("img{i:03}"),
                file_path: format!("img{i:03}.png").into(),
                width: 300,
                height: 300,
                channels: 3,
            })
            .collect();
        let annotations = (0..n)
            .flat_map(|i| {
                (0..(i % 3)).map(move |j| {
                    let s = 10.0 + 20.0 * j as f64;
                    Annotation::new(
                        format!("img{i:03}"),
                        "pore",
                        BBox::new(5.0, 5.0, 5.0 + s, 5.0 + s).unwrap(),
                    )
                })
            })
            .collect();
        Dataset::new(images, annotations)
    }

    fn square(id: &str, side: f64) -> Annotation {
        Annotation::new(id, "pore", BBox::new(0.0, 0.0, side, side).unwrap())
    }

    #[test]
    fn histogram_examples() {
        let k = SizeBuckets::default();
        assert_eq!(size_histogram(&Dataset::default(), &k), SizeHistogram::default());
        let mut d = synthetic(1);
        d.annotations = vec![square("img000", 30.0), square("img000", 40.0), square("img000", 70.0)];
        assert_eq!(
            size_histogram(&d, &k),
            SizeHistogram {
                small: 1,
                medium: 1,
                large: 1
            }
        );
    }

    #[test]
    fn validate_catches_dangling_annotation() {
        let mut d = synthetic(2);
        d.annotations.push(square("nope", 10.0));
        assert!(d.validate().is_err());
        let mut d = synthetic(2);
        d.images.push(d.images[0].clone());
        assert!(d.validate().is_err());
        assert!(synthetic(5).validate().is_ok());
    }

    #[test]
    fn split_counts_by_enumeration() {
        // floor-then-distribute: 10 · (0.8, 0.1, 0.1) = (8, 1, 1)
        let r = SplitRatios::new(0.8, 0.1, 0.1).unwrap();
        assert_eq!(r.counts(10), [8, 1, 1]);
        // 7 · (0.5, 0.25, 0.25) floors to (3, 1, 1); two leftovers go train, val
        let r = SplitRatios::new(0.5, 0.25, 0.25).unwrap();
        assert_eq!(r.counts(7), [4, 2, 1]);
        // leftovers skip parts with zero ratio
        let r = SplitRatios::new(0.5, 0.0, 0.5).unwrap();
        assert_eq!(r.counts(3), [2, 0, 1]);
        assert_eq!(SplitRatios::new(1.0, 0.0, 0.0).unwrap().counts(9), [9, 0, 0]);
        assert!(SplitRatios::new(0.5, 0.5, 0.5).is_err());
        assert!(SplitRatios::new(1.5, -0.5, 0.0).is_err());
    }

    #[test]
    fn split_examples() {
        let d = synthetic(10);
        let (tr, va, te) = split(&d, SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 3);
        assert_eq!((tr.images.len(), va.images.len(), te.images.len()), (10, 0, 0));
        assert_eq!(tr.split_tag, SplitTag::Train);

        let r = SplitRatios::new(0.8, 0.1, 0.1).unwrap();
        let a = split(&d, r, 42);
        let b = split(&d, r, 42);
        assert_eq!(a, b);
        assert_eq!((a.0.images.len(), a.1.images.len(), a.2.images.len()), (8, 1, 1));
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 0usize..40, seed: u64, a in 0u32..10, b in 0u32..10, c in 0u32..10) {
            prop_assume!(a + b + c > 0);
            let s = (a + b + c) as f64;
            let r = SplitRatios::new(a as f64 / s, b as f64 / s, c as f64 / s).unwrap();
            let d = synthetic(n);
            let (tr, va, te) = split(&d, r, seed);
            let mut ids: Vec<_> = tr.images.iter().chain(&va.images).chain(&te.images)
                .map(|i| i.image_id.clone()).collect();
            ids.sort();
            let mut want: Vec<_> = d.images.iter().map(|i| i.image_id.clone()).collect();
            want.sort();
            prop_assert_eq!(ids, want);
            prop_assert_eq!(
                tr.annotations.len() + va.annotations.len() + te.annotations.len(),
                d.annotations.len()
            );
            for part in [&tr, &va, &te] {
                prop_assert!(part.validate().is_ok());
            }
        }

        #[test]
        fn histogram_sums_to_count(n in 0usize..30) {
            let d = synthetic(n);
            prop_assert_eq!(size_histogram(&d, &SizeBuckets::default()).total(), d.annotations.len());
        }
    }
}
