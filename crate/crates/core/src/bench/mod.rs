//! Accuracy metrics, query timing and the experiment runners.
//!
//! Every runner is deterministic in its config and master seed apart from
//! wall-clock fields. Per-scene and per-trial seeds are derived from the
//! master seed and recorded in each emitted row so rows can be replayed alone.

mod accuracy;
mod narrow;
mod optimization;
mod report;
pub mod scene;

use std::hint::black_box;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use accuracy::{run_accuracy_experiment, AccuracyConfig, AccuracyResult, MethodAccuracy, SceneAccuracy};
pub use narrow::{
    export_cspace_field, narrow_passage_seed, run_narrow_passage, FieldGrid, NarrowPassageResult, NarrowPassageRunConfig,
    TracePoint,
};
pub use optimization::{
    run_optimization_experiment, HybridConfig, MethodSummary, OptimizationConfig, OptimizationResult, TrialRecord,
};
pub use report::Table;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::kinematics::RobotModel;
use crate::regression::{
    fit_selected, select_hyperparameters_with_prior, select_kr_gamma, Eta2Mode, GpModel, KrModel, PriorMean, Selection,
    DEFAULT_ETA2,
};

/// Minimum number of timed queries.
pub const MIN_TIMED_QUERIES: usize = 1000;
pub const DEFAULT_WARMUP: usize = 100;
/// Queries per batch for the median-of-batches figure.
pub const TIMING_BATCH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    /// Error over rows with positive true distance; absent when there are none.
    pub tpmse: Option<f64>,
    /// Error over rows with negative true distance; absent when there are none.
    pub tnmse: Option<f64>,
    pub n_test: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub mean_true_distance: f64,
}

/// MSE, TPMSE and TNMSE of `predict` against a noise-free test set. Rows
/// with a true distance of exactly 0 count toward the MSE only.
pub fn eval_metrics(mut predict: impl FnMut(&[f64]) -> Result<f64>, test: &Dataset) -> Result<MetricsReport> {
    if !test.meta.noise_free {
        return Err(Error::InvalidArgument("metrics need a noise-free test set".into()));
    }
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let (mut all, mut pos, mut neg) = (0.0, 0.0, 0.0);
    let (mut n_pos, mut n_neg) = (0, 0);
    for (x, y) in test.x.iter().zip(&test.y) {
        let e = (predict(x)? - y).powi(2);
        all += e;
        if *y > 0.0 {
            pos += e;
            n_pos += 1;
        } else if *y < 0.0 {
            neg += e;
            n_neg += 1;
        }
    }
    let n = test.len();
    Ok(MetricsReport {
        mse: all / n as f64,
        tpmse: (n_pos > 0).then(|| pos / n_pos as f64),
        tnmse: (n_neg > 0).then(|| neg / n_neg as f64),
        n_test: n,
        n_pos,
        n_neg,
        mean_true_distance: test.y.iter().sum::<f64>() / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub per_query_mean_us: f64,
    pub per_query_p50_us: f64,
    pub per_query_p95_us: f64,
    /// Median over batches of [`TIMING_BATCH`] queries of the batch mean.
    pub batch_median_us: f64,
    pub n_queries: usize,
    pub n_warmup: usize,
}

/// Single-threaded wall-clock latency of `predict` over `queries`, after
/// `n_warmup` untimed calls.
pub fn time_queries(
    mut predict: impl FnMut(&[f64]) -> Result<f64>,
    queries: &[Vec<f64>],
    n_warmup: usize,
) -> Result<TimingReport> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("empty query set".into()));
    }
    if queries.len() < MIN_TIMED_QUERIES {
        return Err(Error::InvalidArgument(format!(
            "timing needs at least {MIN_TIMED_QUERIES} queries, got {}",
            queries.len()
        )));
    }
    for q in queries.iter().cycle().take(n_warmup) {
        black_box(predict(black_box(q))?);
    }
    let mut samples = Vec::with_capacity(queries.len());
    for q in queries {
        let t = Instant::now();
        black_box(predict(black_box(q))?);
        samples.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let mut batches: Vec<f64> =
        samples.chunks(TIMING_BATCH).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    samples.sort_by(f64::total_cmp);
    batches.sort_by(f64::total_cmp);
    Ok(TimingReport {
        per_query_mean_us: mean,
        per_query_p50_us: quantile(&samples, 0.5),
        per_query_p95_us: quantile(&samples, 0.95),
        batch_median_us: quantile(&batches, 0.5),
        n_queries: queries.len(),
        n_warmup,
    })
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Independent child seed for `(stream, index)` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Hyperparameter handling shared by the experiment runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub eta2: Eta2Mode,
    pub prior_mean: PriorMean,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { eta2: Eta2Mode::Search, prior_mean: PriorMean::LabelMean }
    }
}

impl FitConfig {
    /// Fixed noise at the injected level with zero prior mean.
    pub fn fixed() -> Self {
        FitConfig { eta2: Eta2Mode::Fixed(DEFAULT_ETA2), prior_mean: PriorMean::Zero }
    }
}

/// The three learned estimators fitted to one training set.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub kr: KrModel,
    pub gp_gaussian: GpModel,
    pub gp_fk: GpModel,
    pub kr_selection: Selection,
    pub gaussian_selection: Selection,
    pub fk_selection: Selection,
}

pub fn fit_models(train: &Dataset, robot: &RobotModel, fit: &FitConfig) -> Result<FittedModels> {
    let select = |kind| select_hyperparameters_with_prior(&train.x, &train.y, kind, Some(robot), fit.eta2, fit.prior_mean);
    let gaussian_selection = select(KernelKind::Gaussian)?;
    let fk_selection = select(KernelKind::Fk)?;
    let kr_selection = select_kr_gamma(&train.x, &train.y)?;
    Ok(FittedModels {
        kr: KrModel::new(&train.x, &train.y, &kr_selection.spec)?,
        gp_gaussian: fit_selected(&train.x, &train.y, &gaussian_selection)?,
        gp_fk: fit_selected(&train.x, &train.y, &fk_selection)?,
        kr_selection,
        gaussian_selection,
        fk_selection,
    })
}

/// Runs `f(i)` for `i < n` on up to `jobs` threads; results keep index order.
pub(crate) fn parallel_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<T>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|_| {
                scope.spawn(|| {
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= n {
                            break out;
                        }
                        out.push((i, f(i)));
                    }
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every index visited")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_test_set, DatasetMeta};
    use crate::geometry::{ConvexPolygon, Environment};
    use crate::Vec2;

    fn env() -> Environment {
        let robot = RobotModel::uniform(2, 1.0).unwrap();
        let sq = ConvexPolygon::new(vec![
            Vec2::new(1.2, -0.3),
            Vec2::new(1.8, -0.3),
            Vec2::new(1.8, 0.3),
            Vec2::new(1.2, 0.3),
        ])
        .unwrap();
        Environment::new(robot, vec![sq])
    }

    #[test]
    fn oracle_and_biased_oracle_metrics() {
        let env = env();
        let test = generate_test_set(&env, 400, 3).unwrap();
        let m = eval_metrics(|x| env.distance(x), &test).unwrap();
        assert_eq!((m.mse, m.tpmse, m.tnmse), (0.0, Some(0.0), Some(0.0)));
        assert!(m.n_pos > 0 && m.n_neg > 0);
        let m = eval_metrics(|x| Ok(env.distance(x)? + 0.1), &test).unwrap();
        assert!((m.mse - 0.01).abs() < 1e-12);
        let weighted = m.n_pos as f64 * m.tpmse.unwrap() + m.n_neg as f64 * m.tnmse.unwrap();
        assert!((m.n_test as f64 * m.mse - weighted).abs() < 1e-9);
    }

    #[test]
    fn empty_subsets_are_absent() {
        let meta = DatasetMeta { env_hash: String::new(), eta: 0.0, seed: 0, noise_free: true };
        let test = Dataset { x: vec![vec![0.0], vec![1.0], vec![2.0]], y: vec![1.0, 2.0, 0.0], meta };
        let m = eval_metrics(|x| Ok(x[0]), &test).unwrap();
        assert_eq!(m.tnmse, None);
        // squared errors 1, 1, 4; the zero-label row counts toward the MSE only
        assert_eq!(m.tpmse, Some(1.0));
        assert_eq!(m.mse, 2.0);
        let mut noisy = test.clone();
        noisy.meta.noise_free = false;
        assert!(eval_metrics(|x| Ok(x[0]), &noisy).is_err());
    }

    #[test]
    fn timing_contract() {
        let q: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64]).collect();
        let t = time_queries(|x| Ok(x[0].sqrt()), &q, 10).unwrap();
        assert_eq!((t.n_queries, t.n_warmup), (1000, 10));
        assert!(t.per_query_p50_us <= t.per_query_p95_us);
        assert!(time_queries(|x| Ok(x[0]), &q[..999], 10).is_err());
        assert!(time_queries(|x| Ok(x[0]), &[], 10).is_err());
    }

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        let mut all: Vec<u64> = (0..4).flat_map(|s| (0..50).map(move |i| derive_seed(7, s, i))).collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 200);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map(37, 4, |i| Ok(i * i)).unwrap();
        assert_eq!(out, (0..37).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(5, 3, |i| if i == 2 { Err(Error::InvalidArgument("x".into())) } else { Ok(i) }).is_err());
    }
}
