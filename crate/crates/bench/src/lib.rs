//! Seeded inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weldqa_core::{Annotation, BBox, Dataset, Detection, ImageRecord, Raster};

/// A 300×300 three-channel frame with a few dark square pores.
pub fn frame(seed: u64) -> (Raster, Vec<Annotation>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; 300 * 300 * 3];
    for (i, p) in pixels.iter_mut().enumerate() {
        *p = (100 + (i / 3 % 300) / 4) as u8 + rng.random_range(0..16);
    }
    let mut r = Raster::from_vec(300, 300, 3, pixels).unwrap();
    let mut anns = Vec::new();
    for _ in 0..3 {
        let s = rng.random_range(10..80u32);
        let (x0, y0) = (rng.random_range(0..300 - s), rng.random_range(0..300 - s));
        for y in y0..y0 + s {
            for x in x0..x0 + s {
                for c in 0..3 {
                    r.set(x, y, c, 25);
                }
            }
        }
        let b = BBox::from_xywh(x0 as f64, y0 as f64, s as f64, s as f64).unwrap();
        anns.push(Annotation::new(format!("f{seed}"), "pore", b));
    }
    (r, anns)
}

/// `n` frames with their annotations, keyed `f0`, `f1`, ...
pub fn dataset(n: u64) -> (Dataset, Vec<Raster>) {
    let mut images = Vec::new();
    let mut anns = Vec::new();
    let mut rasters = Vec::new();
    for i in 0..n {
        let (r, a) = frame(i);
        images.push(ImageRecord {
            image_id: format!("f{i}"),
            file_path: format!("f{i}.png").into(),
            width: 300,
            height: 300,
            channels: 3,
        });
        anns.extend(a);
        rasters.push(r);
    }
    (Dataset::new(images, anns), rasters)
}

/// Jittered, scored copies of the ground truth plus some clutter.
pub fn detections(d: &Dataset, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for a in &d.annotations {
        let j = |rng: &mut ChaCha8Rng| rng.random_range(-4.0..4.0);
        let b = BBox::new(
            (a.bbox.x_min + j(&mut rng)).max(0.0),
            (a.bbox.y_min + j(&mut rng)).max(0.0),
            a.bbox.x_max + j(&mut rng) + 5.0,
            a.bbox.y_max + j(&mut rng) + 5.0,
        )
        .unwrap();
        out.push(Detection::new(a.image_id.clone(), "pore", b, rng.random_range(0.3..1.0)));
    }
    for img in &d.images {
        for _ in 0..5 {
            let (x, y) = (rng.random_range(0.0..250.0), rng.random_range(0.0..250.0));
            let b = BBox::from_xywh(x, y, rng.random_range(5.0..50.0), rng.random_range(5.0..50.0)).unwrap();
            out.push(Detection::new(img.image_id.clone(), "pore", b, rng.random_range(0.0..0.6)));
        }
    }
    out
}
