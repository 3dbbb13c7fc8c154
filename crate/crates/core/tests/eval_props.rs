use proptest::prelude::*;

use zspose::eval::{accuracy, aggregate, evaluate_with, haar_ball_fraction, median, EvalOptions, PairResult, Prediction};
use zspose::geom::{RigidTransformSim3, Rotation3};
use zspose::pipeline::Fallback;
use zspose::synth::{gen_benchmark, NoiseProfile};

fn record(cat: usize, err: f64) -> PairResult {
    PairResult {
        pair_id: format!("{cat}-{err}"),
        category: format!("c{cat}"),
        rotation_error_deg: err,
        translation_error: 0.0,
        best_view: 0,
        fallback: "none",
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn metrics_ignore_record_order(errs in prop::collection::vec((0usize..4, 0.0f64..180.0), 1..60), rot in 0usize..60) {
        let records: Vec<PairResult> = errs.iter().map(|&(c, e)| record(c, e)).collect();
        let mut shuffled = records.clone();
        shuffled.reverse();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        for micro in [false, true] {
            prop_assert_eq!(aggregate(&records, micro), aggregate(&shuffled, micro));
        }
        let values: Vec<f64> = errs.iter().map(|e| e.1).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(median(&values), median(&sorted));
        prop_assert_eq!(accuracy(&values, 30.0), accuracy(&sorted, 30.0));
    }

    #[test]
    fn acc15_never_exceeds_acc30(errs in prop::collection::vec((0usize..4, 0.0f64..180.0), 1..60)) {
        let records: Vec<PairResult> = errs.iter().map(|&(c, e)| record(c, e)).collect();
        let (per, agg) = aggregate(&records, false);
        prop_assert!(agg.acc15 <= agg.acc30 && (0.0..=100.0).contains(&agg.acc30));
        for c in &per {
            prop_assert!(c.acc15 <= c.acc30);
        }
    }

    #[test]
    fn macro_aggregate_is_category_mean(errs in prop::collection::vec((0usize..4, 0.0f64..180.0), 1..60)) {
        let records: Vec<PairResult> = errs.iter().map(|&(c, e)| record(c, e)).collect();
        let (per, agg) = aggregate(&records, false);
        let mean = |f: fn(&zspose::eval::CategoryReport) -> f64| per.iter().map(f).sum::<f64>() / per.len() as f64;
        prop_assert!((agg.acc30 - mean(|c| c.acc30)).abs() < 1e-9);
        prop_assert!((agg.median_error_deg - mean(|c| c.median_error_deg)).abs() < 1e-9);
        prop_assert_eq!(per.iter().map(|c| c.pairs).sum::<usize>(), records.len());
    }
}

#[test]
fn hand_cases() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.0);
    assert_eq!(accuracy(&[10.0, 20.0, 30.0, 40.0], 30.0), 50.0);
    assert_eq!(accuracy(&[14.9, 15.0], 15.0), 50.0);
    let records = vec![record(0, 10.0), record(0, 20.0), record(1, 50.0)];
    let (_, macro_agg) = aggregate(&records, false);
    let (_, micro_agg) = aggregate(&records, true);
    assert_eq!(macro_agg.acc30, 50.0);
    assert!((micro_agg.acc30 - 200.0 / 3.0).abs() < 1e-12);
}

#[test]
fn haar_fraction_endpoints() {
    assert_eq!(haar_ball_fraction(0.0), 0.0);
    assert!((haar_ball_fraction(std::f64::consts::PI) - 1.0).abs() < 1e-15);
}

#[test]
fn bimodal_predictor_and_skips() {
    let data = gen_benchmark(2, 6, 2, NoiseProfile::zero(), 21).unwrap();
    let flip = Rotation3::rot_x(std::f64::consts::PI);
    let report = evaluate_with(&data.pairs, &data, &EvalOptions::default(), |ctx| {
        let gt = ctx.ground_truth(0);
        let index: usize = ctx.spec.pair_id.rsplit('-').next().unwrap().parse().unwrap();
        let transform = match index % 3 {
            0 => gt,
            1 => RigidTransformSim3 { rotation: gt.rotation.compose(&flip), ..gt },
            _ => return Err(zspose::Error::NoConsensus),
        };
        Ok(Prediction { transform, view: 0, fallback: Fallback::None })
    })
    .unwrap();
    assert_eq!(report.skipped + report.records.len(), data.pairs.len());
    assert_eq!(report.skipped, 4);
    let near_zero = report.records.iter().filter(|r| r.rotation_error_deg < 1e-6).count();
    let near_180 = report.records.iter().filter(|r| (r.rotation_error_deg - 180.0).abs() < 1e-6).count();
    assert_eq!((near_zero, near_180), (4, 4));
    assert!(report.records.iter().all(|r| (0.0..=180.0).contains(&r.rotation_error_deg)));
}
