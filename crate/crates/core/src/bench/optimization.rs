use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::report::{exact, opt, Table};
use super::scene::{random_environment, sample_endpoints, SceneConfig};
use super::{derive_seed, fit_models, parallel_map, FitConfig};
use crate::dataset::{generate_dataset, DEFAULT_ETA, DEFAULT_TRAIN_SIZE};
use crate::error::{Error, Result};
use crate::geometry::Environment;
use crate::hybrid::{HybridEstimator, Sensor, DEFAULT_N_SENSOR, DEFAULT_Z};
use crate::optimize::{
    optimize, path_length, seed_trajectory, Estimator, EstimatorKind, Mode, OptimizeProblem, OptimizeReport, RrtOptions,
    SolverOptions, Status, Trajectory, DEFAULT_DTHETA, DEFAULT_D_MIN, DEFAULT_WAYPOINTS, FEASIBILITY_TOLERANCE,
    STEP_TOLERANCE,
};
use crate::optimize::clearance;

const TRIAL_STREAM: u64 = 10;
const SCENE: u64 = 0;
const TRAIN: u64 = 1;
const ENDPOINTS: u64 = 2;
const PLANNER: u64 = 3;
const SENSOR: u64 = 4;

pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    pub z: f64,
    pub n_sensor: usize,
    pub threshold: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig { z: DEFAULT_Z, n_sensor: DEFAULT_N_SENSOR, threshold: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub mode: Mode,
    pub seed: u64,
    pub trials: usize,
    pub methods: Vec<EstimatorKind>,
    pub scene: SceneConfig,
    pub waypoints: usize,
    pub dtheta_max: f64,
    pub d_min: f64,
    /// Oracle clearance required of sampled start and goal configurations.
    pub endpoint_clearance: f64,
    pub n_train: usize,
    pub eta: f64,
    pub fit: FitConfig,
    pub hybrid: HybridConfig,
    pub rrt: RrtOptions,
    pub solver: SolverOptions,
    pub jobs: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            mode: Mode::Constraint,
            seed: 1,
            trials: DEFAULT_TRIALS,
            methods: vec![
                EstimatorKind::Oracle,
                EstimatorKind::NoisyOracle,
                EstimatorKind::Kr,
                EstimatorKind::GpGaussian,
                EstimatorKind::GpFk,
            ],
            scene: SceneConfig::default(),
            waypoints: DEFAULT_WAYPOINTS,
            dtheta_max: DEFAULT_DTHETA,
            d_min: DEFAULT_D_MIN,
            endpoint_clearance: DEFAULT_D_MIN + 0.1,
            n_train: DEFAULT_TRAIN_SIZE,
            eta: DEFAULT_ETA,
            fit: FitConfig::default(),
            hybrid: HybridConfig::default(),
            rrt: RrtOptions::default(),
            solver: SolverOptions::default(),
            jobs: 1,
        }
    }
}

impl OptimizationConfig {
    pub fn table2() -> Self {
        OptimizationConfig::default()
    }

    pub fn table3() -> Self {
        OptimizationConfig { mode: Mode::Maximize, ..OptimizationConfig::default() }
    }
}

/// One (trial, method) optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub trial_seed: u64,
    pub env_hash: String,
    pub seed_path_length: f64,
    pub seed_oracle_min_clearance: f64,
    pub endpoints_exact: bool,
    pub steps_within_limit: bool,
    pub merit_monotone: bool,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub trajectory: Vec<Vec<f64>>,
    pub report: OptimizeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: EstimatorKind,
    pub trials: usize,
    pub mean_time_s: f64,
    pub mean_path_length: f64,
    pub mean_oracle_min_clearance: f64,
    /// Constraint mode only.
    pub mean_slack: Option<f64>,
    /// Trials whose oracle-verified clearance meets `d_min` (constraint mode).
    pub oracle_feasible: usize,
    pub converged: usize,
    /// Trials on which this method finished before the oracle estimator.
    pub faster_than_oracle: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub config: OptimizationConfig,
    pub records: Vec<TrialRecord>,
    /// Trials skipped because no start/goal pair or RRT plan was found.
    pub skipped_trials: Vec<(usize, u64, String)>,
}

impl OptimizationResult {
    pub fn records_for(&self, kind: EstimatorKind) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.report.estimator == kind)
    }

    pub fn without_timing(&self) -> OptimizationResult {
        let mut r = self.clone();
        for rec in &mut r.records {
            rec.report.wall_time_s = 0.0;
        }
        r
    }

    pub fn summaries(&self) -> Vec<MethodSummary> {
        let constraint = self.config.mode == Mode::Constraint;
        self.config
            .methods
            .iter()
            .map(|&method| {
                let rows: Vec<&TrialRecord> = self.records_for(method).collect();
                let n = rows.len().max(1) as f64;
                let mean = |f: fn(&TrialRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
                let faster = (method != EstimatorKind::Oracle && self.config.methods.contains(&EstimatorKind::Oracle))
                    .then(|| {
                        rows.iter()
                            .filter(|r| {
                                self.records_for(EstimatorKind::Oracle)
                                    .find(|o| o.trial == r.trial)
                                    .is_some_and(|o| r.report.wall_time_s < o.report.wall_time_s)
                            })
                            .count()
                    });
                MethodSummary {
                    method,
                    trials: rows.len(),
                    mean_time_s: mean(|r| r.report.wall_time_s),
                    mean_path_length: mean(|r| r.report.path_length),
                    mean_oracle_min_clearance: mean(|r| r.report.oracle_min_clearance),
                    mean_slack: constraint.then(|| mean(|r| r.report.slack.unwrap_or(f64::NAN))),
                    oracle_feasible: rows
                        .iter()
                        .filter(|r| r.report.oracle_min_clearance >= r.report.d_min - FEASIBILITY_TOLERANCE)
                        .count(),
                    converged: rows.iter().filter(|r| r.report.status == Status::Converged).count(),
                    faster_than_oracle: faster,
                }
            })
            .collect()
    }

    pub fn summary_table(&self) -> Table {
        let constraint = self.config.mode == Mode::Constraint;
        let title = format!(
            "{} mode over {} trial(s) ({} skipped), seed {}, d_min {}",
            self.config.mode,
            self.config.trials - self.skipped_trials.len(),
            self.skipped_trials.len(),
            self.config.seed,
            self.config.d_min
        );
        let mut t = Table::new(
            title,
            &[
                "method", "trials", "time_s", "path_length", "slack", "min_clearance", "oracle_feasible", "converged",
                "faster_than_oracle",
            ],
        );
        for s in self.summaries() {
            t.push(vec![
                s.method.to_string(),
                s.trials.to_string(),
                format!("{:.3}", s.mean_time_s),
                format!("{:.3}", s.mean_path_length),
                if constraint { opt(s.mean_slack, 3) } else { "-".into() },
                format!("{:.3}", s.mean_oracle_min_clearance),
                format!("{}/{}", s.oracle_feasible, s.trials),
                format!("{}/{}", s.converged, s.trials),
                s.faster_than_oracle.map_or("-".into(), |c| format!("{c}/{}", s.trials)),
            ]);
        }
        t
    }

    pub fn trial_table(&self) -> Table {
        let mut t = Table::new(
            "Per-trial optimization",
            &[
                "trial", "trial_seed", "method", "env_hash", "time_s", "path_length", "seed_path_length", "objective",
                "estimator_min_clearance", "oracle_min_clearance", "seed_oracle_min_clearance", "slack", "feasible",
                "status", "outer_iterations", "inner_iterations", "estimator_calls", "max_step", "endpoints_exact",
                "steps_within_limit", "merit_monotone", "branch_switches", "sensor_calls",
            ],
        );
        for r in &self.records {
            let p = &r.report;
            t.push(vec![
                r.trial.to_string(),
                r.trial_seed.to_string(),
                p.estimator.to_string(),
                r.env_hash.clone(),
                format!("{:.4}", p.wall_time_s),
                exact(p.path_length),
                exact(r.seed_path_length),
                exact(p.objective),
                exact(p.estimator_min_clearance),
                exact(p.oracle_min_clearance),
                exact(r.seed_oracle_min_clearance),
                p.slack.map_or("-".into(), exact),
                p.feasible.to_string(),
                serde_json::to_value(p.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                p.outer_iterations.to_string(),
                p.inner_iterations.to_string(),
                p.estimator_calls.to_string(),
                exact(p.max_step),
                r.endpoints_exact.to_string(),
                r.steps_within_limit.to_string(),
                r.merit_monotone.to_string(),
                p.branch_switches.map_or("-".into(), |v| v.to_string()),
                p.sensor_calls.map_or("-".into(), |v| v.to_string()),
            ]);
        }
        t
    }
}

fn min_oracle_clearance(env: &Environment, traj: &Trajectory) -> Result<f64> {
    traj.waypoints().iter().try_fold(f64::INFINITY, |m, w| Ok(f64::min(m, clearance(env, w)?)))
}

/// Runs every configured method from a shared RRT seed on each trial.
/// Trials without a valid start/goal pair or RRT plan are skipped and listed.
pub fn run_optimization_experiment(config: &OptimizationConfig) -> Result<OptimizationResult> {
    if config.trials == 0 || config.methods.is_empty() {
        return Err(Error::InvalidArgument("need at least one trial and one method".into()));
    }
    config.scene.validate()?;
    let per_trial = parallel_map(config.trials, config.jobs, |i| run_trial(config, i))?;
    let mut records = Vec::new();
    let mut skipped_trials = Vec::new();
    for (i, outcome) in per_trial.into_iter().enumerate() {
        match outcome {
            Ok(mut rows) => records.append(&mut rows),
            Err((seed, why)) => {
                log::warn!("trial {i} skipped: {why}");
                skipped_trials.push((i, seed, why));
            }
        }
    }
    Ok(OptimizationResult { config: config.clone(), records, skipped_trials })
}

type TrialOutcome = std::result::Result<Vec<TrialRecord>, (u64, String)>;

fn run_trial(config: &OptimizationConfig, i: usize) -> Result<TrialOutcome> {
    let trial_seed = derive_seed(config.seed, TRIAL_STREAM, i as u64);
    let sub = |stream| derive_seed(trial_seed, stream, 0);
    let env = random_environment(&config.scene, &mut ChaCha8Rng::seed_from_u64(sub(SCENE)))?;
    let max_span = (config.waypoints.saturating_sub(1)) as f64 * config.dtheta_max;
    let (start, goal) = match sample_endpoints(
        &env,
        &mut ChaCha8Rng::seed_from_u64(sub(ENDPOINTS)),
        config.endpoint_clearance,
        max_span,
        10_000,
    ) {
        Ok(pair) => pair,
        Err(e) => return Ok(Err((trial_seed, e.to_string()))),
    };
    let seed = match seed_trajectory(
        &env,
        &start,
        &goal,
        config.waypoints,
        &mut ChaCha8Rng::seed_from_u64(sub(PLANNER)),
        &config.rrt,
    ) {
        Ok(t) => t,
        Err(e @ (Error::NoPlanFound(_) | Error::EndpointInCollision(_))) => {
            return Ok(Err((trial_seed, e.to_string())));
        }
        Err(e) => return Err(e),
    };
    let needs_models = config.methods.iter().any(|m| m.is_learned());
    let models = if needs_models {
        let train = generate_dataset(&env, config.n_train, config.eta, sub(TRAIN))?;
        Some(fit_models(&train, &env.robot, &config.fit)?)
    } else {
        None
    };
    let problem = OptimizeProblem {
        env: &env,
        start: start.clone(),
        goal: goal.clone(),
        waypoints: config.waypoints,
        dtheta_max: config.dtheta_max,
        d_min: config.d_min,
        mode: config.mode,
    };
    let seed_path_length = path_length(&seed, &env.robot)?;
    let seed_oracle_min_clearance = min_oracle_clearance(&env, &seed)?;
    let env_hash = env.content_hash();
    let mut rows = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let sensor = || Sensor::new(&env, config.eta, ChaCha8Rng::seed_from_u64(sub(SENSOR)));
        let mut estimator = match (method, models.as_ref()) {
            (EstimatorKind::Oracle, _) => Estimator::oracle(&env),
            (EstimatorKind::NoisyOracle, _) => Estimator::noisy(sensor()?),
            (EstimatorKind::Kr, Some(m)) => Estimator::kr(&m.kr),
            (EstimatorKind::GpGaussian, Some(m)) => Estimator::gp(&m.gp_gaussian),
            (EstimatorKind::GpFk, Some(m)) => Estimator::gp(&m.gp_fk),
            (EstimatorKind::Hybrid, Some(m)) => Estimator::hybrid(HybridEstimator::new(
                &m.gp_fk,
                sensor()?,
                config.hybrid.z,
                config.hybrid.n_sensor,
                config.hybrid.threshold,
            )?),
            (_, None) => unreachable!("learned methods imply fitted models"),
        };
        let (traj, mut report) = optimize(&problem, &mut estimator, &seed, &config.solver)?;
        report.seed = Some(trial_seed);
        rows.push(TrialRecord {
            trial: i,
            trial_seed,
            env_hash: env_hash.clone(),
            seed_path_length,
            seed_oracle_min_clearance,
            endpoints_exact: traj.start() == start.as_slice() && traj.goal() == goal.as_slice(),
            steps_within_limit: traj.max_step() <= config.dtheta_max + STEP_TOLERANCE,
            merit_monotone: report.merit_history.windows(2).all(|w| w[1] <= w[0]),
            start: start.clone(),
            goal: goal.clone(),
            trajectory: traj.into_waypoints(),
            report,
        });
    }
    Ok(Ok(rows))
}
