mod common;

use proptest::prelude::*;
use weldqa_core::dataset::{parse_detections, render_detections};
use weldqa_core::eval::{evaluate, EvalConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn evaluate_agrees_with_reference(seed in any::<u64>()) {
        let (d, dets) = common::random_instance(seed);
        let got = evaluate(&dets, &d, &EvalConfig::default()).unwrap();
        let want = common::reference_evaluate(&dets, &d);
        for (g, w) in got.ap.iter().flatten().zip(want.ap.iter().flatten()) {
            prop_assert!((g - w).abs() <= 1e-9, "ap {g} vs {w}");
        }
        for (g, w) in got.ar.iter().flatten().zip(want.ar.iter().flatten()) {
            prop_assert!((g - w).abs() <= 1e-9, "ar {g} vs {w}");
        }
    }

    #[test]
    fn detections_file_round_trip_preserves_metrics(seed in any::<u64>()) {
        let (d, dets) = common::random_instance(seed);
        let reread = parse_detections(&render_detections(&dets)).unwrap();
        let cfg = EvalConfig::default();
        prop_assert_eq!(evaluate(&dets, &d, &cfg).unwrap(), evaluate(&reread, &d, &cfg).unwrap());
    }

    #[test]
    fn input_order_of_distinct_scores_does_not_matter(seed in any::<u64>()) {
        let (d, mut dets) = common::random_instance(seed);
        // make every score distinct so ranking is order-free
        for (i, det) in dets.iter_mut().enumerate() {
            det.score = 1.0 - i as f64 / 1000.0;
        }
        let cfg = EvalConfig::default();
        let a = evaluate(&dets, &d, &cfg).unwrap();
        dets.reverse();
        let b = evaluate(&dets, &d, &cfg).unwrap();
        prop_assert_eq!(a.ap, b.ap);
        prop_assert_eq!(a.ar, b.ar);
    }
}
