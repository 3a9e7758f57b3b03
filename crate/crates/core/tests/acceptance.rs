//! End-to-end acceptance checks. Each criterion prints one `PASS`/`FAIL`
//! line; the test fails if any criterion does. Criteria run one after
//! another in a single test so that timing measurements never share the
//! machine with other work.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtc::bench::scene::{random_environment, SceneConfig};
use dtc::bench::{
    run_accuracy_experiment, run_narrow_passage, run_optimization_experiment, AccuracyConfig, AccuracyResult,
    NarrowPassageResult, NarrowPassageRunConfig, OptimizationConfig, OptimizationResult,
};
use dtc::dataset::{generate_dataset, sample_configs};
use dtc::hybrid::{std_normal_cdf, Branch};
use dtc::kernels::{fk_kernel, gaussian_kernel, gram_matrix, median_heuristic_gamma, KernelSpec, DEFAULT_FK_GAMMA};
use dtc::optimize::EstimatorKind;
use dtc::regression::GpModel;
use dtc::{ConvexPolygon, RobotModel, Vec2};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn polygon_pairs_match_minkowski_oracle() -> Verdict {
    let t0 = Instant::now();
    let mut rng = rng(101);
    let (mut worst, mut hits, mut misses) = (0.0f64, 0, 0);
    for _ in 0..500 {
        let ca = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cb = Vec2::new(rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5));
        let (ra, rb) = (rng.random_range(0.3..1.5), rng.random_range(0.3..1.5));
        let a = common::random_convex(&mut rng, ca, ra);
        let b = common::random_convex(&mut rng, cb, rb);
        let want = common::minkowski_signed_distance(&a, &b);
        let got = dtc::geometry::signed_distance(
            &ConvexPolygon::new(a.clone()).unwrap(),
            &ConvexPolygon::new(b.clone()).unwrap(),
        )
        .unwrap();
        worst = worst.max((got - want).abs());
        if want < 0.0 {
            hits += 1;
        } else {
            misses += 1;
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-7 && secs < 10.0 && hits > 0 && misses > 0,
        format!("max |error| {worst:.2e} over {hits} intersecting and {misses} disjoint pairs in {secs:.2} s"),
    )
}

fn scene(seed: u64) -> dtc::Environment {
    random_environment(&SceneConfig::default(), &mut rng(seed)).unwrap()
}

fn gp_interpolates_noise_free_labels() -> Verdict {
    let env = scene(202);
    let train = generate_dataset(&env, 100, 0.0, 203).unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for spec in [
        KernelSpec::fk(DEFAULT_FK_GAMMA, env.robot.clone()).unwrap(),
        KernelSpec::gaussian(median_heuristic_gamma(&train.x).unwrap()).unwrap(),
    ] {
        let gp = GpModel::fit(&train.x, &train.y, &spec, 1e-8).unwrap();
        let mut mean_err = 0.0f64;
        let mut train_var = 0.0f64;
        for (x, y) in train.x.iter().zip(&train.y) {
            mean_err = mean_err.max((gp.mean(x).unwrap() - y).abs());
            train_var = train_var.max(gp.variance(x).unwrap());
        }
        let mut out_of_range = 0;
        for x in sample_configs(&env.robot, 10_000, &mut rng(204)).unwrap() {
            let v = gp.variance(&x).unwrap();
            if !(0.0..=spec.eval(&x, &x).unwrap()).contains(&v) {
                out_of_range += 1;
            }
        }
        pass &= mean_err <= 1e-4 && train_var <= 1e-4 && out_of_range == 0;
        lines.push(format!(
            "{}: max label error {mean_err:.2e}, max train variance {train_var:.2e}, {out_of_range} query variances outside [0, k(x,x)]",
            spec.kind
        ));
    }
    verdict(pass, lines.join("; "))
}

fn gram_matrices_are_psd() -> Verdict {
    let robot = RobotModel::uniform(7, 1.0).unwrap();
    let fk = KernelSpec::fk(DEFAULT_FK_GAMMA, robot.clone()).unwrap();
    let m = robot.num_control_points() as f64;
    let mut rng = rng(303);
    let (mut min_fk, mut min_gauss) = (f64::INFINITY, f64::INFINITY);
    let mut diag_exact = true;
    for _ in 0..50 {
        let xs = sample_configs(&robot, 100, &mut rng).unwrap();
        let gauss = KernelSpec::gaussian(median_heuristic_gamma(&xs).unwrap()).unwrap();
        for (spec, min) in [(&fk, &mut min_fk), (&gauss, &mut min_gauss)] {
            let k = gram_matrix(spec, &xs, &xs).unwrap();
            *min = min.min(SymmetricEigen::new(k).eigenvalues.min());
        }
        for x in &xs {
            diag_exact &= fk_kernel(x, x, &fk).unwrap() == m;
            diag_exact &= gaussian_kernel(x, x, gauss.gamma).unwrap() == 1.0;
        }
    }
    verdict(
        min_fk >= -1e-9 && min_gauss >= -1e-9 && diag_exact,
        format!("min eigenvalue fk {min_fk:.2e}, gaussian {min_gauss:.2e}; diagonals exact: {diag_exact}"),
    )
}

fn mse(scene: &dtc::bench::SceneAccuracy, kind: EstimatorKind) -> f64 {
    scene.method(kind).unwrap().metrics.mse
}

fn accuracy_ordering(result: &AccuracyResult, secs: f64) -> Verdict {
    let ordered = result
        .scenes
        .iter()
        .filter(|s| {
            mse(s, EstimatorKind::GpFk) < mse(s, EstimatorKind::GpGaussian)
                && mse(s, EstimatorKind::GpGaussian) < mse(s, EstimatorKind::Kr)
        })
        .count();
    let small = result.scenes.iter().filter(|s| mse(s, EstimatorKind::GpFk) <= 0.2).count();
    let means: Vec<String> = [EstimatorKind::GpFk, EstimatorKind::GpGaussian, EstimatorKind::Kr]
        .iter()
        .map(|&k| format!("{} {:.3}", k.name(), result.scenes.iter().map(|s| mse(s, k)).sum::<f64>() / result.scenes.len() as f64))
        .collect();
    verdict(
        result.scenes.len() == 10 && ordered >= 8 && small >= 8 && secs <= 600.0,
        format!(
            "ordering holds on {ordered}/{}, gp-fk mse <= 0.2 on {small}; mean mse {}; {secs:.0} s",
            result.scenes.len(),
            means.join(", ")
        ),
    )
}

fn mean_query_us(result: &AccuracyResult, kind: EstimatorKind) -> f64 {
    let t: Vec<f64> =
        result.scenes.iter().map(|s| s.method(kind).unwrap().timing.as_ref().unwrap().per_query_mean_us).collect();
    t.iter().sum::<f64>() / t.len() as f64
}

fn query_speed(result: &AccuracyResult) -> Verdict {
    let oracle = mean_query_us(result, EstimatorKind::Oracle);
    let fk = mean_query_us(result, EstimatorKind::GpFk);
    let gauss = mean_query_us(result, EstimatorKind::GpGaussian);
    verdict(
        oracle >= 10.0 * fk && gauss < fk,
        format!("per query: oracle {oracle:.2} us, gp-fk {fk:.2} us ({:.2}x), gp-gaussian {gauss:.2} us", oracle / fk),
    )
}

/// Records of `kind` keyed by trial.
fn by_trial(result: &OptimizationResult, kind: EstimatorKind) -> BTreeMap<usize, &dtc::bench::TrialRecord> {
    result.records_for(kind).map(|r| (r.trial, r)).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn constraint_pattern(result: &OptimizationResult) -> Verdict {
    let slack = |k| mean(result.records_for(k).map(|r| r.report.slack.unwrap()));
    let (fk, gauss) = (slack(EstimatorKind::GpFk), slack(EstimatorKind::GpGaussian));
    let oracle = by_trial(result, EstimatorKind::Oracle);
    let mut slower = Vec::new();
    let mut learned = 0;
    for kind in EstimatorKind::ALL.into_iter().filter(|k| k.is_learned()) {
        for (trial, r) in by_trial(result, kind) {
            learned += 1;
            if r.report.wall_time_s >= oracle[&trial].report.wall_time_s {
                slower.push(format!("{}@{trial}", kind.name()));
            }
        }
    }
    verdict(
        oracle.len() == result.config.trials && fk > gauss && fk >= -0.05 && slower.is_empty(),
        format!(
            "{} trials; mean slack oracle {:.3}, gp-fk {fk:.3}, gp-gaussian {gauss:.3}, kr {:.3}; {} of {learned} learned runs not faster than the oracle run",
            oracle.len(),
            slack(EstimatorKind::Oracle),
            slack(EstimatorKind::Kr),
            slower.len()
        ),
    )
}

fn maximize_pattern(result: &OptimizationResult) -> Verdict {
    let clearance = |k| mean(result.records_for(k).map(|r| r.report.oracle_min_clearance));
    let (fk, gauss) = (clearance(EstimatorKind::GpFk), clearance(EstimatorKind::GpGaussian));
    let trials = by_trial(result, EstimatorKind::Oracle).len();
    verdict(
        trials == result.config.trials && fk > 0.0 && fk > gauss,
        format!(
            "{trials} trials; mean oracle min clearance oracle {:.3}, gp-fk {fk:.3}, gp-gaussian {gauss:.3}, kr {:.3}",
            clearance(EstimatorKind::Oracle),
            clearance(EstimatorKind::Kr)
        ),
    )
}

fn optimizer_contracts(results: &[&OptimizationResult]) -> Verdict {
    let mut runs = 0;
    let mut broken = Vec::new();
    for result in results {
        let limit = result.config.dtheta_max + 1e-6;
        for r in &result.records {
            runs += 1;
            let traj = &r.trajectory;
            let endpoints = traj.len() == result.config.waypoints && traj[0] == r.start && traj[traj.len() - 1] == r.goal;
            let steps = traj.windows(2).all(|w| {
                w[0].iter().zip(&w[1]).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt() <= limit
            });
            let merit = r.report.merit_history.windows(2).all(|w| w[1] <= w[0]);
            if !(endpoints && steps && merit) {
                broken.push(format!(
                    "{:?} {} trial {} (endpoints {endpoints}, steps {steps}, merit {merit})",
                    result.config.mode,
                    r.report.estimator.name(),
                    r.trial
                ));
            }
        }
    }
    verdict(broken.is_empty() && runs > 0, format!("{} of {runs} runs violate a contract {broken:?}", broken.len()))
}

fn narrow_passage_trace(result: &NarrowPassageResult) -> Verdict {
    let bound = 3.0 * 0.05 / 5f64.sqrt();
    let trace = &result.trace;
    let prefix = result.gp_prefix_len();
    let first_sensor = result.first_sensor_index();
    let min_at = result.min_clearance_index();
    let switched_before_min = first_sensor.is_some_and(|i| i <= min_at);
    let within = result.sensor_within(bound).unwrap_or(0.0);
    let opening = trace[..prefix].iter().map(|p| p.oracle).fold(f64::INFINITY, f64::min);
    verdict(
        trace[0].branch == Branch::Gp && prefix >= 2 && switched_before_min && within >= 0.95,
        format!(
            "gp on waypoints 0..{prefix} (oracle clearance >= {opening:.3}), first sensor {first_sensor:?}, minimum clearance {:.3} at {min_at}, {:.1}% of sensor waypoints within {bound:.4}",
            trace[min_at].oracle,
            100.0 * within
        ),
    )
}

fn numerical_utilities() -> Verdict {
    let mut cdf_err = 0.0f64;
    for i in 0..=16_000 {
        let t = -8.0 + i as f64 * 1e-3;
        cdf_err = cdf_err.max((std_normal_cdf(t) - common::normal_cdf_series(t)).abs());
    }
    let robot = RobotModel::uniform(7, 1.0).unwrap();
    let lengths = robot.link_lengths().to_vec();
    let h = 1e-6;
    let mut jac_err = 0.0f64;
    for x in sample_configs(&robot, 100, &mut rng(1010)).unwrap() {
        let j = robot.ee_jacobian(&x).unwrap();
        for c in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[c] += h;
            down[c] -= h;
            let (a, b) = (common::end_effector(&lengths, &up), common::end_effector(&lengths, &down));
            let fd = [(a.0 - b.0) / (2.0 * h), (a.1 - b.1) / (2.0 * h)];
            jac_err = jac_err.max(common::max_abs_diff(&[j[(0, c)], j[(1, c)]], &fd));
        }
    }
    verdict(
        cdf_err <= 1e-7 && jac_err <= 1e-5,
        format!("normal cdf max error {cdf_err:.2e} on [-8, 8]; jacobian max error {jac_err:.2e}"),
    )
}

fn same_bits<T: serde::Serialize + PartialEq>(a: &T, b: &T) -> bool {
    a == b && serde_json::to_string(a).unwrap() == serde_json::to_string(b).unwrap()
}

fn determinism() -> Verdict {
    let accuracy = AccuracyConfig { scenes: 2, n_train: 150, n_test: 1000, ..AccuracyConfig::default() };
    // the echoed worker count is an execution setting, not an output
    let table1 = |jobs| {
        let mut r = run_accuracy_experiment(&AccuracyConfig { jobs, ..accuracy.clone() }).unwrap().without_timing();
        r.config.jobs = 1;
        r
    };

    let small = |mut c: OptimizationConfig, methods: Vec<EstimatorKind>| {
        c.trials = 2;
        c.n_train = 150;
        c.methods = methods;
        c
    };
    let table2 = small(
        OptimizationConfig::table2(),
        vec![EstimatorKind::Oracle, EstimatorKind::NoisyOracle, EstimatorKind::GpFk, EstimatorKind::Hybrid],
    );
    let table3 = small(OptimizationConfig::table3(), vec![EstimatorKind::Oracle, EstimatorKind::GpGaussian]);
    let optimize = |c: &OptimizationConfig, jobs| {
        let mut r = run_optimization_experiment(&OptimizationConfig { jobs, ..c.clone() }).unwrap().without_timing();
        r.config.jobs = 1;
        r
    };
    let narrow = || run_narrow_passage(&NarrowPassageRunConfig::default()).unwrap().without_timing();

    let checks = [
        ("table1", same_bits(&table1(1), &table1(1)) && same_bits(&table1(1), &table1(2))),
        ("table2", same_bits(&optimize(&table2, 1), &optimize(&table2, 2))),
        ("table3", same_bits(&optimize(&table3, 1), &optimize(&table3, 1)) && same_bits(&optimize(&table3, 1), &optimize(&table3, 3))),
        ("narrow-passage", same_bits(&narrow(), &narrow())),
    ];
    let differ: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(differ.is_empty(), format!("reruns of table1, table2, table3, narrow-passage; differing: {differ:?}"))
}

#[test]
fn acceptance_criteria() {
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |n: u32, name: &'static str, v: Verdict| {
        println!("criterion {n:>2} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push((n, name, v));
    };

    record(1, "geometry oracle", polygon_pairs_match_minkowski_oracle());
    record(2, "gp correctness", gp_interpolates_noise_free_labels());
    record(3, "kernel properties", gram_matrices_are_psd());

    let t0 = Instant::now();
    let table1 = run_accuracy_experiment(&AccuracyConfig::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    record(4, "accuracy ordering", accuracy_ordering(&table1, secs));
    record(5, "query speed", query_speed(&table1));

    let table2 = run_optimization_experiment(&OptimizationConfig::table2()).unwrap();
    record(6, "constraint mode", constraint_pattern(&table2));
    let table3 = run_optimization_experiment(&OptimizationConfig::table3()).unwrap();
    record(7, "maximize mode", maximize_pattern(&table3));
    record(8, "optimizer contracts", optimizer_contracts(&[&table2, &table3]));

    let narrow = run_narrow_passage(&NarrowPassageRunConfig::default()).unwrap();
    record(9, "narrow passage", narrow_passage_trace(&narrow));
    record(10, "numerical utilities", numerical_utilities());
    record(11, "determinism", determinism());

    let failed: Vec<String> = verdicts.iter().filter(|v| !v.2.pass).map(|v| format!("{} ({})", v.0, v.1)).collect();
    println!("{} of {} criteria pass", verdicts.len() - failed.len(), verdicts.len());
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}
