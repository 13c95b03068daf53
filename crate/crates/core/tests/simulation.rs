use nalgebra::Vector3;
use proptest::prelude::*;

use plink_core::field::RangeSample;
use plink_core::sensor::{ray_directions, Pose, SensorIntrinsics};
use plink_core::simscene::{canonical, SceneSpec, TrueCdf};
use plink_core::streams::stream;

const DRAWS: usize = 10_000;

/// Largest gap between the empirical return CDF and the analytic one, both
/// unconditioned (drops count toward neither).
fn ks_distance(truth: &TrueCdf, ranges: &[f64], n: usize) -> f64 {
    let mut sorted = ranges.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut worst: f64 = 0.0;
    for &(at, _) in &truth.jumps {
        let below = sorted.partition_point(|&r| r < at) as f64 / n as f64;
        let upto = sorted.partition_point(|&r| r <= at) as f64 / n as f64;
        worst = worst.max((below - truth.eval(at - 1e-9)).abs());
        worst = worst.max((upto - truth.eval(at)).abs());
    }
    worst
}

fn scan_rays(origin: Vector3<f64>) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let intrinsics = SensorIntrinsics::new(vec![-0.1, 0.0, 0.1], 24, 20.0, 0.1).unwrap();
    let start = Pose::from_yaw(0.0, origin, 0.0);
    ray_directions(&intrinsics, &start, &start.with_timestamp(0.1))
        .unwrap()
        .into_iter()
        .map(|r| (r.origin, r.direction))
        .collect()
}

#[test]
fn sampled_returns_converge_to_the_analytic_cdf() {
    for name in ["two_surface", "courtyard_toy", "drop_room"] {
        let scene = canonical::by_name(name).unwrap();
        for (i, (o, d)) in scan_rays(Vector3::zeros()).into_iter().enumerate().step_by(7) {
            let truth = scene.true_cdf(&o, &d, 20.0);
            let mut rng = stream(&[11, i as u64]);
            let ranges: Vec<f64> = (0..DRAWS)
                .filter_map(|_| scene.sample(&o, &d, 20.0, &mut rng).range())
                .collect();
            let ks = ks_distance(&truth, &ranges, DRAWS);
            assert!(ks < 0.03, "{name} ray {i}: KS {ks}");
            let drops = 1.0 - ranges.len() as f64 / DRAWS as f64;
            assert!((drops - truth.drop_probability).abs() < 0.03, "{name} ray {i}");
        }
    }
}

#[test]
fn total_mass_and_drop_probability_sum_to_one() {
    for name in canonical::NAMES {
        let scene = canonical::by_name(name).unwrap();
        for (o, d) in scan_rays(Vector3::new(0.5, -0.25, 0.0)) {
            let t = scene.true_cdf(&o, &d, 20.0);
            assert!((t.total() + t.drop_probability - 1.0).abs() < 1e-12, "{name}");
        }
    }
}

#[test]
fn stacked_screens_follow_sequential_survival() {
    // screen p = 0.5 at 5 m, screen p = 0.5 at 10 m, nothing behind
    let text = r#"
        bounds_min = [-1.0, -5.0, -5.0]
        bounds_max = [12.0, 5.0, 5.0]

        [[surface]]
        kind = "plane"
        origin = [5.0, 0.0, 0.0]
        normal = [-1.0, 0.0, 0.0]
        extent = [8.0, 8.0]
        return_prob = 0.5
        oblique_drop_deg = 90.0

        [[surface]]
        kind = "plane"
        origin = [10.0, 0.0, 0.0]
        normal = [-1.0, 0.0, 0.0]
        extent = [8.0, 8.0]
        return_prob = 0.5
        oblique_drop_deg = 90.0
    "#;
    let scene = SceneSpec::parse(text, std::path::Path::new("screens.toml")).unwrap();
    let t = scene.true_cdf(&Vector3::zeros(), &Vector3::x(), 20.0);
    assert_eq!(t.jumps, vec![(5.0, 0.5), (10.0, 0.25)]);
    assert!((t.drop_probability - 0.25).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generation_is_reproducible(seed in any::<u64>(), yaw in -3.0f64..3.0) {
        let scene = canonical::two_surface();
        let d = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let draw = |s: u64| -> Vec<RangeSample> {
            let mut rng = stream(&[s]);
            (0..32).map(|_| scene.sample(&Vector3::zeros(), &d, 12.0, &mut rng)).collect()
        };
        prop_assert_eq!(draw(seed), draw(seed));
    }
}
