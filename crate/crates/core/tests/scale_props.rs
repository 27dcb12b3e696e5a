mod common;

use common::{random_pose, rng, small_world, uniform, uniform_vector};
use monorange_core::geometry::Pose;
use monorange_core::ranging::{predict_range, RangeMeasurement, RangingExtrinsics};
use monorange_core::scale::{
    accumulate_duplets, scale_candidates, select_scale, BranchStats, ScaleError, ScaleQuadratic, SelectionConfig,
    DEFAULT_ASSOCIATION_TOLERANCE,
};
use monorange_core::sim::{self, NoiseConfig};
use monorange_core::trajectory::StampedPose;
use nalgebra::Vector3;
use proptest::prelude::*;

#[test]
fn roots_solve_the_quadratic_and_the_range() {
    let mut r = rng(31);
    let mut solved = 0;
    for _ in 0..1000 {
        let pose = random_pose(&mut r, 20.0);
        let ext = RangingExtrinsics::new(uniform_vector(&mut r, 40.0), uniform_vector(&mut r, 0.5));
        let rho = uniform(&mut r, 0.0, 80.0);
        let range = RangeMeasurement::with_default_sigma(0.0, rho).unwrap();
        let Ok(d) = scale_candidates(&pose, &range, &ext) else {
            continue;
        };
        solved += 1;
        let q = ScaleQuadratic::new(&pose, rho, &ext);
        assert!(d.alpha_minus <= d.alpha_plus);
        for alpha in [d.alpha_minus, d.alpha_plus] {
            assert!(q.evaluate(alpha).abs() <= 1e-8 * q.c.abs().max(1.0), "residual {:e}", q.evaluate(alpha));
            assert!((predict_range(&pose, alpha, &ext) - rho).abs() <= 1e-8);
        }
    }
    assert!(solved > 300, "only {solved} geometries had real roots");
}

#[test]
fn synthesized_range_recovers_the_true_scale() {
    let mut r = rng(32);
    for _ in 0..1000 {
        let pose = random_pose(&mut r, 20.0);
        let ext = RangingExtrinsics::new(uniform_vector(&mut r, 40.0), uniform_vector(&mut r, 0.5));
        let rho = predict_range(&pose, 4.6, &ext);
        let d = scale_candidates(&pose, &RangeMeasurement::with_default_sigma(0.0, rho).unwrap(), &ext).unwrap();
        let err = (d.alpha_minus - 4.6).abs().min((d.alpha_plus - 4.6).abs());
        assert!(err <= 1e-9, "error {err:e}");
    }
}

#[test]
fn examples_from_simple_geometry() {
    let pose = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
    let origin = RangingExtrinsics::new(Vector3::zeros(), Vector3::zeros());
    let d = scale_candidates(&pose, &RangeMeasurement::with_default_sigma(0.0, 2.0).unwrap(), &origin).unwrap();
    assert_eq!((d.alpha_minus, d.alpha_plus), (-2.0, 2.0));

    let on_path = RangingExtrinsics::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
    let d = scale_candidates(&pose, &RangeMeasurement::with_default_sigma(0.0, 0.0).unwrap(), &on_path).unwrap();
    assert_eq!((d.alpha_minus, d.alpha_plus), (1.0, 1.0));

    let still = Pose::from_translation(Vector3::new(1e-7, 0.0, 0.0));
    assert!(matches!(
        scale_candidates(&still, &RangeMeasurement::with_default_sigma(0.0, 1.0).unwrap(), &origin),
        Err(ScaleError::DegeneratePose { .. })
    ));
}

#[test]
fn noiseless_runs_have_one_constant_branch() {
    for (seed, alpha) in [(1u64, 4.6), (2, 0.37), (3, 12.0), (4, 1.0)] {
        let mut cfg = small_world(seed, 60, 60);
        cfg.true_scale = alpha;
        let sc = sim::simulate(&cfg, &NoiseConfig::noiseless()).unwrap();
        let acc = accumulate_duplets(&sc.vo_trajectory, &sc.measurements.ranges, &sc.world.extrinsics, DEFAULT_ASSOCIATION_TOLERANCE)
            .unwrap();
        // The first keyframe sits at the World origin.
        assert_eq!(acc.skipped.degenerate_pose, 1);
        assert_eq!(acc.duplets.len(), 59);
        for d in &acc.duplets {
            let hits = [d.alpha_minus, d.alpha_plus].iter().filter(|a| ((*a - alpha) / alpha).abs() < 1e-8).count();
            assert!(hits >= 1, "duplet {d:?} misses {alpha}");
        }
        let est = select_scale(&acc.duplets, &SelectionConfig::default()).unwrap();
        assert!(((est.alpha - alpha) / alpha).abs() < 1e-8);
        assert!(est.std_dev < 1e-8 * alpha);
        assert!(est.rejected_branch_std > 0.1);
        assert!(!est.ambiguous);
    }
}

fn line_trajectory(n: usize) -> Vec<StampedPose> {
    (0..n)
        .map(|i| StampedPose::new(i as f64, Pose::from_translation(Vector3::new(1.0 + i as f64, 0.0, 0.0))))
        .collect()
}

#[test]
fn unreachable_range_is_counted_and_skipped() {
    let traj = line_trajectory(50);
    let ext = RangingExtrinsics::new(Vector3::new(0.0, 5.0, 0.0), Vector3::zeros());
    let mut ranges: Vec<RangeMeasurement> = traj
        .iter()
        .map(|s| RangeMeasurement::with_default_sigma(s.timestamp, predict_range(&s.pose, 2.0, &ext)).unwrap())
        .collect();
    // The x axis never comes closer than 5 m to the anchor.
    ranges[17].distance = 1.0;
    let acc = accumulate_duplets(&traj, &ranges, &ext, 0.05).unwrap();
    assert_eq!(acc.duplets.len(), 49);
    assert_eq!(acc.skipped.no_real_solution, 1);
    assert_eq!(acc.skipped.total(), 1);
    assert!(acc.duplets.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
}

#[test]
fn ranges_outside_tolerance_give_nothing() {
    let traj = line_trajectory(10);
    let ext = RangingExtrinsics::new(Vector3::new(0.0, 5.0, 0.0), Vector3::zeros());
    let ranges: Vec<_> = (0..10).map(|i| RangeMeasurement::with_default_sigma(i as f64 + 0.5, 6.0).unwrap()).collect();
    let acc = accumulate_duplets(&traj, &ranges, &ext, 0.05).unwrap();
    assert!(acc.duplets.is_empty());
    assert_eq!(acc.skipped.unassociated, 10);
}

/// Values with exactly the requested mean and sample standard deviation.
fn shaped(mean: f64, std: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let raw: Vec<f64> = (0..n).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let s = BranchStats::from_values(&raw);
    raw.iter().map(|v| mean + std * (v - s.mean) / s.std_dev).collect()
}

#[test]
fn realistic_statistics_select_the_tight_branch() {
    let minus = shaped(-4.17613, 9.39333, 200, 1);
    let plus = shaped(4.63161, 0.213666, 200, 2);
    let duplets: Vec<_> = minus
        .iter()
        .zip(&plus)
        .enumerate()
        .map(|(i, (m, p))| monorange_core::scale::ScaleDuplet {
            timestamp: i as f64,
            alpha_minus: *m,
            alpha_plus: *p,
            discriminant: 1.0,
        })
        .collect();
    let est = select_scale(&duplets, &SelectionConfig::default()).unwrap();
    assert!((est.alpha - 4.63161).abs() < 1e-9);
    assert!((est.std_dev - 0.213666).abs() < 1e-9);
    assert!((est.rejected_branch_mean + 4.17613).abs() < 1e-9);
    assert!((est.rejected_branch_std - 9.39333).abs() < 1e-9);
    assert_eq!(est.n_samples, 200);
}

#[test]
fn too_few_duplets() {
    let d = monorange_core::scale::ScaleDuplet { timestamp: 0.0, alpha_minus: -1.0, alpha_plus: 1.0, discriminant: 1.0 };
    assert!(matches!(
        select_scale(&[d; 9], &SelectionConfig::default()),
        Err(ScaleError::InsufficientSamples { got: 9, needed: 10 })
    ));
}

proptest! {
    #[test]
    fn selected_spread_never_exceeds_rejected(values in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 10..60)) {
        let duplets: Vec<_> = values
            .iter()
            .enumerate()
            .map(|(i, (a, b))| monorange_core::scale::ScaleDuplet {
                timestamp: i as f64,
                alpha_minus: a.min(*b),
                alpha_plus: a.max(*b),
                discriminant: 1.0,
            })
            .collect();
        let est = select_scale(&duplets, &SelectionConfig::default()).unwrap();
        prop_assert!(est.std_dev <= est.rejected_branch_std);
        prop_assert!(est.n_samples >= 10);
    }

    #[test]
    fn roots_are_ordered(seed in any::<u64>(), rho in 0.0f64..100.0) {
        let mut r = rng(seed);
        let pose = random_pose(&mut r, 30.0);
        let ext = RangingExtrinsics::new(uniform_vector(&mut r, 40.0), uniform_vector(&mut r, 1.0));
        if let Ok(d) = scale_candidates(&pose, &RangeMeasurement::with_default_sigma(0.0, rho).unwrap(), &ext) {
            prop_assert!(d.alpha_minus <= d.alpha_plus);
            prop_assert!(d.discriminant >= 0.0);
        }
    }
}
