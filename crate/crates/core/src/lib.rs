//! Dataset preparation, offline augmentation and COCO-style evaluation for
//! weld-seam pore detection.
//!
//! The modules follow the data as it flows through an inspection project:
//!
//! * [`geometry`]: boxes, IoU, size buckets, affine maps.
//! * [`dataset`]: images and annotations, PASCAL VOC and detections files,
//!   size histograms, deterministic splits.
//! * [`raster`]: cropping, channel duplication, contrast stretch and the
//!   photometric/geometric primitives used by augmentation.
//! * [`augment`]: seeded ×k dataset scaling with label propagation.
//! * [`eval`]: AP/AR over IoU thresholds, size buckets and detection caps.
//! * [`qa`]: calibrated pore sizes and accept/reject verdicts.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod qa;
pub mod raster;

pub use dataset::{Annotation, Dataset, Detection, ImageRecord, SizeHistogram, SplitTag};
pub use error::{Error, Result};
pub use geometry::{AffineMap, BBox, SizeBuckets, SizeClass};
pub use raster::{CropRect, FlipAxis, Raster};
pub use eval::{EvalConfig, EvalResult};
pub use qa::{Calibration, Verdict};
