use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use weldqa_bench::{dataset, detections, frame};
use weldqa_core::augment::{scale_dataset, AugmentPlan};
use weldqa_core::eval::{evaluate, EvalConfig};
use weldqa_core::raster::gaussian_blur;
use weldqa_core::BBox;

fn iou(c: &mut Criterion) {
    let a = BBox::new(10.0, 10.0, 60.0, 80.0).unwrap();
    let b = BBox::new(30.0, 20.0, 90.0, 70.0).unwrap();
    c.bench_function("iou", |bench| bench.iter(|| black_box(&a).iou(black_box(&b))));
}

fn eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate");
    for n in [50u64, 500] {
        let (d, _) = dataset(n);
        let dets = detections(&d, 1);
        let cfg = EvalConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| evaluate(black_box(&dets), &d, &cfg).unwrap())
        });
    }
    group.finish();
}

fn blur(c: &mut Criterion) {
    let (r, _) = frame(0);
    let mut group = c.benchmark_group("gaussian_blur_300x300");
    for sigma in [0.5, 2.0] {
        group.bench_with_input(BenchmarkId::from_parameter(sigma), &sigma, |bench, &s| {
            bench.iter(|| gaussian_blur(black_box(&r), s))
        });
    }
    group.finish();
}

fn scale(c: &mut Criterion) {
    let (d, rasters) = dataset(20);
    let plan = AugmentPlan::new(4, 7).unwrap();
    let mut group = c.benchmark_group("scale_dataset_x4_20_images");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(BenchmarkId::new("workers", workers), &workers, |bench, &w| {
            bench.iter(|| {
                scale_dataset(
                    &d,
                    &plan,
                    w,
                    |rec| Ok(rasters[rec.image_id[1..].parse::<usize>().unwrap()].clone()),
                    |_, _| Ok(()),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, iou, eval, blur, scale);
criterion_main!(benches);
