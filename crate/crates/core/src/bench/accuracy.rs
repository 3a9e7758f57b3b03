use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{exact, opt, Table};
use super::scene::{random_environment, SceneConfig};
use super::{derive_seed, eval_metrics, fit_models, parallel_map, time_queries, FitConfig, MetricsReport, TimingReport};
use crate::dataset::{generate_dataset, generate_test_set, DEFAULT_ETA, DEFAULT_TEST_SIZE, DEFAULT_TRAIN_SIZE};
use crate::error::{Error, Result};
use crate::optimize::EstimatorKind;

const SCENE_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccuracyConfig {
    pub seed: u64,
    pub scenes: usize,
    pub scene: SceneConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub eta: f64,
    pub fit: FitConfig,
    pub timing_queries: usize,
    pub timing_warmup: usize,
    /// Worker threads for fitting; timing always runs alone afterwards.
    pub jobs: usize,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        AccuracyConfig {
            seed: 1,
            scenes: 10,
            scene: SceneConfig::default(),
            n_train: DEFAULT_TRAIN_SIZE,
            n_test: DEFAULT_TEST_SIZE,
            eta: DEFAULT_ETA,
            fit: FitConfig::default(),
            timing_queries: 1000,
            timing_warmup: super::DEFAULT_WARMUP,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: EstimatorKind,
    pub metrics: MetricsReport,
    pub timing: Option<TimingReport>,
    /// Selected kernel width; absent for the oracle.
    pub gamma: Option<f64>,
    pub eta2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneAccuracy {
    pub index: usize,
    pub scene_seed: u64,
    pub train_seed: u64,
    pub test_seed: u64,
    pub env_hash: String,
    pub mean_true_distance: f64,
    /// Oracle, KR, GP-Gaussian, GP-FK in that order.
    pub methods: Vec<MethodAccuracy>,
}

impl SceneAccuracy {
    pub fn method(&self, kind: EstimatorKind) -> Option<&MethodAccuracy> {
        self.methods.iter().find(|m| m.method == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub config: AccuracyConfig,
    pub scenes: Vec<SceneAccuracy>,
}

pub const TABLE1_METHODS: [EstimatorKind; 4] =
    [EstimatorKind::Oracle, EstimatorKind::Kr, EstimatorKind::GpGaussian, EstimatorKind::GpFk];

impl AccuracyResult {
    /// Clears wall-clock fields so results can be compared for determinism.
    pub fn without_timing(&self) -> AccuracyResult {
        let mut r = self.clone();
        for s in &mut r.scenes {
            for m in &mut s.methods {
                m.timing = None;
            }
        }
        r
    }

    /// One row per method, averaged over scenes.
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(
            format!("Accuracy and query time over {} scene(s), seed {}", self.scenes.len(), self.config.seed),
            &["method", "mse", "tpmse", "tnmse", "query_us", "query_p50_us", "scenes", "mean_true_distance"],
        );
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let mtd = mean(self.scenes.iter().map(|s| s.mean_true_distance).collect());
        for kind in TABLE1_METHODS {
            let rows: Vec<&MethodAccuracy> = self.scenes.iter().filter_map(|s| s.method(kind)).collect();
            t.push(vec![
                kind.to_string(),
                opt(mean(rows.iter().map(|m| m.metrics.mse).collect()), 4),
                opt(mean(rows.iter().filter_map(|m| m.metrics.tpmse).collect()), 4),
                opt(mean(rows.iter().filter_map(|m| m.metrics.tnmse).collect()), 4),
                opt(mean(rows.iter().filter_map(|m| m.timing.map(|t| t.per_query_mean_us)).collect()), 2),
                opt(mean(rows.iter().filter_map(|m| m.timing.map(|t| t.per_query_p50_us)).collect()), 2),
                rows.len().to_string(),
                opt(mtd, 3),
            ]);
        }
        t
    }

    /// One row per (scene, method) with the seeds needed to replay it.
    pub fn scene_table(&self) -> Table {
        let mut t = Table::new(
            "Per-scene accuracy",
            &[
                "scene", "method", "scene_seed", "train_seed", "test_seed", "env_hash", "mse", "tpmse", "tnmse", "n_test",
                "n_pos", "n_neg", "mean_true_distance", "gamma", "eta2", "query_us", "query_p50_us", "query_p95_us",
                "batch_median_us",
            ],
        );
        for s in &self.scenes {
            for m in &s.methods {
                let timing = |f: fn(&TimingReport) -> f64| opt(m.timing.as_ref().map(f), 3);
                t.push(vec![
                    s.index.to_string(),
                    m.method.to_string(),
                    s.scene_seed.to_string(),
                    s.train_seed.to_string(),
                    s.test_seed.to_string(),
                    s.env_hash.clone(),
                    exact(m.metrics.mse),
                    m.metrics.tpmse.map_or("-".into(), exact),
                    m.metrics.tnmse.map_or("-".into(), exact),
                    m.metrics.n_test.to_string(),
                    m.metrics.n_pos.to_string(),
                    m.metrics.n_neg.to_string(),
                    exact(m.metrics.mean_true_distance),
                    m.gamma.map_or("-".into(), exact),
                    m.eta2.map_or("-".into(), exact),
                    timing(|t| t.per_query_mean_us),
                    timing(|t| t.per_query_p50_us),
                    timing(|t| t.per_query_p95_us),
                    timing(|t| t.batch_median_us),
                ]);
            }
        }
        t
    }
}

/// Fits KR, GP-Gaussian and GP-FK on each random scene and reports their
/// accuracy against the oracle, then times every method single-threaded.
pub fn run_accuracy_experiment(config: &AccuracyConfig) -> Result<AccuracyResult> {
    if config.scenes == 0 {
        return Err(Error::InvalidArgument("at least one scene required".into()));
    }
    if config.timing_queries > config.n_test {
        return Err(Error::InvalidArgument("timing queries are drawn from the test set; raise n_test".into()));
    }
    config.scene.validate()?;
    let prepared = parallel_map(config.scenes, config.jobs, |i| {
        let scene_seed = derive_seed(config.seed, SCENE_STREAM, i as u64);
        let train_seed = derive_seed(config.seed, TRAIN_STREAM, i as u64);
        let test_seed = derive_seed(config.seed, TEST_STREAM, i as u64);
        let env = random_environment(&config.scene, &mut ChaCha8Rng::seed_from_u64(scene_seed))?;
        let train = generate_dataset(&env, config.n_train, config.eta, train_seed)?;
        let test = generate_test_set(&env, config.n_test, test_seed)?;
        let models = fit_models(&train, &env.robot, &config.fit)?;
        let methods = vec![
            MethodAccuracy {
                method: EstimatorKind::Oracle,
                metrics: eval_metrics(|x| env.distance(x), &test)?,
                timing: None,
                gamma: None,
                eta2: None,
            },
            MethodAccuracy {
                method: EstimatorKind::Kr,
                metrics: eval_metrics(|x| models.kr.predict(x), &test)?,
                timing: None,
                gamma: Some(models.kr.spec().gamma),
                eta2: None,
            },
            MethodAccuracy {
                method: EstimatorKind::GpGaussian,
                metrics: eval_metrics(|x| models.gp_gaussian.mean(x), &test)?,
                timing: None,
                gamma: Some(models.gp_gaussian.spec().gamma),
                eta2: Some(models.gp_gaussian.eta2()),
            },
            MethodAccuracy {
                method: EstimatorKind::GpFk,
                metrics: eval_metrics(|x| models.gp_fk.mean(x), &test)?,
                timing: None,
                gamma: Some(models.gp_fk.spec().gamma),
                eta2: Some(models.gp_fk.eta2()),
            },
        ];
        let summary = SceneAccuracy {
            index: i,
            scene_seed,
            train_seed,
            test_seed,
            env_hash: env.content_hash(),
            mean_true_distance: methods[0].metrics.mean_true_distance,
            methods,
        };
        Ok((summary, env, models, test))
    })?;

    let mut scenes = Vec::with_capacity(prepared.len());
    for (mut summary, env, models, test) in prepared {
        let q = &test.x[..config.timing_queries];
        let w = config.timing_warmup;
        summary.methods[0].timing = Some(time_queries(|x| env.distance(x), q, w)?);
        summary.methods[1].timing = Some(time_queries(|x| models.kr.predict(x), q, w)?);
        summary.methods[2].timing = Some(time_queries(|x| models.gp_gaussian.mean(x), q, w)?);
        summary.methods[3].timing = Some(time_queries(|x| models.gp_fk.mean(x), q, w)?);
        log::info!(
            "scene {}: mse kr {:.3} gauss {:.3} fk {:.3}",
            summary.index,
            summary.methods[1].metrics.mse,
            summary.methods[2].metrics.mse,
            summary.methods[3].metrics.mse
        );
        scenes.push(summary);
    }
    Ok(AccuracyResult { config: config.clone(), scenes })
}
