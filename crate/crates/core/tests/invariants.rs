mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dtc::bench::derive_seed;
use dtc::dataset::{generate_dataset, sample_configs, Dataset};
use dtc::geometry::signed_distance;
use dtc::hybrid::{std_normal_cdf, Branch, HybridEstimator, Sensor};
use dtc::kernels::KernelSpec;
use dtc::optimize::resample_trajectory;
use dtc::regression::GpModel;
use dtc::{ConvexPolygon, Environment, RobotModel, Vec2};

fn polygon(seed: u64, center: (f64, f64), radius: f64) -> ConvexPolygon {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConvexPolygon::new(common::random_convex(&mut rng, Vec2::new(center.0, center.1), radius)).unwrap()
}

fn two_link_scene(seed: u64) -> Environment {
    let robot = RobotModel::uniform(2, 1.0).unwrap();
    let obstacle = polygon(seed, (1.4, 0.3), 0.4);
    Environment::new(robot, vec![obstacle])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signed_distance_is_symmetric_and_matches_the_oracle(
        sa in any::<u64>(), sb in any::<u64>(),
        bx in -3.0..3.0f64, by in -3.0..3.0f64,
        ra in 0.2..1.5f64, rb in 0.2..1.5f64,
    ) {
        let a = polygon(sa, (0.0, 0.0), ra);
        let b = polygon(sb, (bx, by), rb);
        let ab = signed_distance(&a, &b).unwrap();
        let ba = signed_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        let want = common::minkowski_signed_distance(a.vertices(), b.vertices());
        prop_assert!((ab - want).abs() <= 1e-7, "{} vs {}", ab, want);
    }

    #[test]
    fn signed_distance_ignores_a_common_translation(
        sa in any::<u64>(), sb in any::<u64>(),
        bx in -2.0..2.0f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64,
    ) {
        let a = polygon(sa, (0.0, 0.0), 1.0);
        let b = polygon(sb, (bx, 0.5), 1.0);
        let t = Vec2::new(tx, ty);
        let moved = signed_distance(&a.translated(t), &b.translated(t)).unwrap();
        prop_assert!((moved - signed_distance(&a, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn kernels_are_symmetric_and_bounded_by_the_diagonal(seed in any::<u64>(), gamma in 0.01..10.0f64) {
        let robot = RobotModel::uniform(4, 1.0).unwrap();
        let xs = sample_configs(&robot, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for spec in [KernelSpec::gaussian(gamma).unwrap(), KernelSpec::fk(gamma, robot.clone()).unwrap()] {
            let kxy = spec.eval(&xs[0], &xs[1]).unwrap();
            prop_assert_eq!(kxy, spec.eval(&xs[1], &xs[0]).unwrap());
            prop_assert!(kxy > 0.0 && kxy <= spec.eval(&xs[0], &xs[0]).unwrap());
        }
    }

    #[test]
    fn normal_cdf_is_monotone_and_symmetric(a in -10.0..10.0f64, b in -10.0..10.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(std_normal_cdf(lo) <= std_normal_cdf(hi));
        prop_assert!((std_normal_cdf(a) + std_normal_cdf(-a) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn derived_seeds_are_stable_and_separate_streams(master in any::<u64>(), stream in 0..1000u64, index in 0..1000u64) {
        prop_assert_eq!(derive_seed(master, stream, index), derive_seed(master, stream, index));
        prop_assert_ne!(derive_seed(master, stream, index), derive_seed(master, stream + 1, index));
        prop_assert_ne!(derive_seed(master, stream, index), derive_seed(master, stream, index + 1));
    }

    #[test]
    fn resampling_keeps_endpoints_and_count(seed in any::<u64>(), n in 2..20usize, t in 2..50usize) {
        let robot = RobotModel::uniform(3, 1.0).unwrap();
        let path = sample_configs(&robot, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let traj = resample_trajectory(&path, t).unwrap();
        prop_assert_eq!(traj.len(), t);
        prop_assert_eq!(traj.start(), path[0].as_slice());
        prop_assert_eq!(traj.goal(), path[n - 1].as_slice());
    }

    #[test]
    fn dataset_text_round_trips_exactly(seed in any::<u64>(), eta in 0.0..0.2f64) {
        let env = two_link_scene(seed);
        let data = generate_dataset(&env, 8, eta, seed).unwrap();
        let back = Dataset::from_text(&data.to_text()).unwrap();
        prop_assert_eq!(back.x, data.x);
        prop_assert_eq!(back.y, data.y);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gp_variance_stays_within_the_prior(seed in any::<u64>(), eta2 in 1e-6..0.1f64) {
        let env = two_link_scene(seed);
        let train = generate_dataset(&env, 30, 0.05, seed).unwrap();
        let spec = KernelSpec::fk(1.0, env.robot.clone()).unwrap();
        let gp = GpModel::fit(&train.x, &train.y, &spec, eta2).unwrap();
        let queries = sample_configs(&env.robot, 50, &mut ChaCha8Rng::seed_from_u64(seed ^ 1)).unwrap();
        for x in queries.iter().chain(&train.x) {
            let v = gp.variance(x).unwrap();
            prop_assert!(v >= 0.0 && v <= spec.eval(x, x).unwrap());
        }
    }

    #[test]
    fn hybrid_trusts_the_gp_exactly_when_its_lower_bound_clears(seed in any::<u64>(), threshold in -0.5..1.0f64) {
        let env = two_link_scene(seed);
        let train = generate_dataset(&env, 30, 0.05, seed).unwrap();
        let gp = GpModel::fit(&train.x, &train.y, &KernelSpec::fk(1.0, env.robot.clone()).unwrap(), 0.0025).unwrap();
        let sensor = Sensor::new(&env, 0.05, ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut hybrid = HybridEstimator::new(&gp, sensor, 1.64, 5, threshold).unwrap();
        for x in sample_configs(&env.robot, 20, &mut ChaCha8Rng::seed_from_u64(seed ^ 2)).unwrap() {
            let out = hybrid.predict(&x).unwrap();
            let p = gp.predict(&x).unwrap();
            let trusted = p.mean - 1.64 * p.variance.sqrt() >= threshold;
            prop_assert_eq!(out.branch == Branch::Gp, trusted);
            if trusted {
                prop_assert_eq!(out.value, p.mean);
            }
        }
    }
}
