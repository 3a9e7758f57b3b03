use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optimization::HybridConfig;
use super::report::{exact, Table};
use super::scene::{narrow_passage, NarrowPassageConfig};
use super::{derive_seed, FitConfig};
use crate::dataset::{generate_dataset, DEFAULT_ETA, DEFAULT_TRAIN_SIZE};
use crate::error::{Error, Result};
use crate::geometry::Environment;
use crate::hybrid::{confidence_from_prediction, Branch, HybridEstimator, Sensor};
use crate::kernels::KernelKind;
use crate::optimize::{
    clearance, optimize, resample_trajectory, Estimator, Mode, OptimizeProblem, OptimizeReport, SolverOptions,
    DEFAULT_DTHETA,
};
use crate::regression::{fit_selected, select_hyperparameters_with_prior, GpModel};

const NARROW_STREAM: u64 = 20;
const TRAIN: u64 = 0;
const OPT_SENSOR: u64 = 1;
const TRACE_SENSOR: u64 = 2;

/// Fold angle of the constructed seed; the tip of the folded arm stays inside
/// radius `4 cos(a) + 3` while it swings past the blocks.
const FOLD: f64 = 1.45;
const DENSE_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrowPassageRunConfig {
    pub seed: u64,
    pub passage: NarrowPassageConfig,
    pub n_train: usize,
    pub eta: f64,
    pub fit: FitConfig,
    pub waypoints: usize,
    pub dtheta_max: f64,
    pub d_min: f64,
    pub hybrid: HybridConfig,
    pub solver: SolverOptions,
}

impl Default for NarrowPassageRunConfig {
    fn default() -> Self {
        NarrowPassageRunConfig {
            seed: 1,
            passage: NarrowPassageConfig::default(),
            n_train: DEFAULT_TRAIN_SIZE,
            eta: DEFAULT_ETA,
            fit: FitConfig::default(),
            waypoints: 40,
            dtheta_max: DEFAULT_DTHETA,
            d_min: 0.05,
            hybrid: HybridConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

/// Fold, swing, unfold: for the 7-joint passage scene the arm folds into
/// `(psi - a, 0, 2a, 0, -a, 0, 0)`, whose last three links stay on the ray at
/// angle `psi`, rotates to `psi = 0`, then unfolds into the slot.
/// Densely sampled; resample before optimizing.
pub fn narrow_passage_seed(start: &[f64], goal: &[f64]) -> Result<Vec<Vec<f64>>> {
    let folded = |psi: f64, a: f64| {
        let mut q = vec![0.0; start.len()];
        q[0] = psi - a;
        q[2] = 2.0 * a;
        q[4] = -a;
        q
    };
    let standard = start.len() == 7
        && start.iter().zip(folded(FRAC_PI_2, 0.0)).all(|(a, b)| *a == b)
        && goal.iter().zip(folded(0.0, 0.0)).all(|(a, b)| *a == b)
        && goal.len() == 7;
    if !standard {
        return Err(Error::InvalidArgument("the constructed seed needs the 7-joint passage endpoints".into()));
    }
    let s = |k: usize| k as f64 / DENSE_STEPS as f64;
    let mut path = Vec::with_capacity(3 * DENSE_STEPS + 1);
    path.extend((0..DENSE_STEPS).map(|k| folded(FRAC_PI_2, FOLD * s(k))));
    path.extend((0..DENSE_STEPS).map(|k| folded(FRAC_PI_2 * (1.0 - s(k)), FOLD)));
    path.extend((0..=DENSE_STEPS).map(|k| folded(0.0, FOLD * (1.0 - s(k)))));
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub gp_mean: f64,
    pub gp_sigma: f64,
    pub hybrid: f64,
    pub branch: Branch,
    /// `P(d > threshold)` under the GP posterior.
    pub confidence: f64,
    pub oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrowPassageResult {
    pub config: NarrowPassageRunConfig,
    pub env_hash: String,
    pub train_seed: u64,
    pub gamma: f64,
    pub eta2: f64,
    pub trajectory: Vec<Vec<f64>>,
    pub report: OptimizeReport,
    pub trace: Vec<TracePoint>,
}

impl NarrowPassageResult {
    /// Index of the first waypoint evaluated on the sensor branch.
    pub fn first_sensor_index(&self) -> Option<usize> {
        self.trace.iter().position(|p| p.branch == Branch::Sensor)
    }

    pub fn min_clearance_index(&self) -> usize {
        self.trace
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.oracle.total_cmp(&b.1.oracle))
            .map_or(0, |(i, _)| i)
    }

    /// Waypoints at the start of the trace answered by the GP.
    pub fn gp_prefix_len(&self) -> usize {
        self.trace.iter().take_while(|p| p.branch == Branch::Gp).count()
    }

    pub fn trace_switches(&self) -> usize {
        self.trace.windows(2).filter(|w| w[0].branch != w[1].branch).count()
    }

    /// Fraction of sensor-branch waypoints whose error is within `bound`;
    /// `None` when no waypoint used the sensor.
    pub fn sensor_within(&self, bound: f64) -> Option<f64> {
        let sensor: Vec<_> = self.trace.iter().filter(|p| p.branch == Branch::Sensor).collect();
        (!sensor.is_empty()).then(|| {
            sensor.iter().filter(|p| (p.hybrid - p.oracle).abs() <= bound).count() as f64 / sensor.len() as f64
        })
    }

    /// Three standard errors of the averaged sensor reading.
    pub fn sensor_bound(&self) -> f64 {
        3.0 * self.config.eta / (self.config.hybrid.n_sensor as f64).sqrt()
    }

    pub fn without_timing(&self) -> NarrowPassageResult {
        let mut r = self.clone();
        r.report.wall_time_s = 0.0;
        r
    }

    pub fn trace_table(&self) -> Table {
        let mut t = Table::new(
            "Hybrid estimator along the narrow-passage trajectory",
            &["t", "gp_mean", "gp_sigma", "hybrid", "branch", "confidence", "oracle"],
        );
        for p in &self.trace {
            t.push(vec![
                p.t.to_string(),
                exact(p.gp_mean),
                exact(p.gp_sigma),
                exact(p.hybrid),
                p.branch.to_string(),
                exact(p.confidence),
                exact(p.oracle),
            ]);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(
            format!("Narrow passage, gap {}, seed {}", self.config.passage.gap, self.config.seed),
            &["quantity", "value"],
        );
        let bound = self.sensor_bound();
        let rows = [
            ("waypoints", self.trace.len().to_string()),
            ("gp_prefix", self.gp_prefix_len().to_string()),
            ("first_sensor_index", self.first_sensor_index().map_or("-".into(), |i| i.to_string())),
            ("min_clearance_index", self.min_clearance_index().to_string()),
            ("trace_switches", self.trace_switches().to_string()),
            ("optimizer_branch_switches", self.report.branch_switches.map_or("-".into(), |v| v.to_string())),
            ("sensor_calls", self.report.sensor_calls.map_or("-".into(), |v| v.to_string())),
            ("sensor_bound", format!("{bound:.4}")),
            ("sensor_within_bound", self.sensor_within(bound).map_or("-".into(), |f| format!("{f:.3}"))),
            ("oracle_min_clearance", format!("{:.4}", self.report.oracle_min_clearance)),
            ("path_length", format!("{:.4}", self.report.path_length)),
            ("feasible", self.report.feasible.to_string()),
            ("gamma", exact(self.gamma)),
            ("eta2", exact(self.eta2)),
        ];
        for (k, v) in rows {
            t.push(vec![k.into(), v]);
        }
        t
    }
}

/// Fits GP-FK on the passage scene, optimizes the constructed seed with the
/// hybrid estimator, and traces the hybrid along the result using a fresh
/// sensor stream.
pub fn run_narrow_passage(config: &NarrowPassageRunConfig) -> Result<NarrowPassageResult> {
    let (env, start, goal) = narrow_passage(&config.passage)?;
    let train_seed = derive_seed(config.seed, NARROW_STREAM, TRAIN);
    let train = generate_dataset(&env, config.n_train, config.eta, train_seed)?;
    let selection = select_hyperparameters_with_prior(
        &train.x,
        &train.y,
        KernelKind::Fk,
        Some(&env.robot),
        config.fit.eta2,
        config.fit.prior_mean,
    )?;
    let gp = fit_selected(&train.x, &train.y, &selection)?;
    let sensor = |stream| Sensor::new(&env, config.eta, ChaCha8Rng::seed_from_u64(derive_seed(config.seed, NARROW_STREAM, stream)));
    let hybrid = |stream| {
        HybridEstimator::new(&gp, sensor(stream)?, config.hybrid.z, config.hybrid.n_sensor, config.hybrid.threshold)
    };

    let seed = resample_trajectory(&narrow_passage_seed(&start, &goal)?, config.waypoints)?;
    let problem = OptimizeProblem {
        env: &env,
        start,
        goal,
        waypoints: config.waypoints,
        dtheta_max: config.dtheta_max,
        d_min: config.d_min,
        mode: Mode::Constraint,
    };
    let mut estimator = Estimator::hybrid(hybrid(OPT_SENSOR)?);
    let (traj, mut report) = optimize(&problem, &mut estimator, &seed, &config.solver)?;
    report.seed = Some(config.seed);

    let mut tracer = hybrid(TRACE_SENSOR)?;
    let trace = traj
        .waypoints()
        .iter()
        .enumerate()
        .map(|(t, w)| {
            let out = tracer.predict(w)?;
            Ok(TracePoint {
                t,
                gp_mean: out.prediction.mean,
                gp_sigma: out.prediction.std_dev(),
                hybrid: out.value,
                branch: out.branch,
                confidence: confidence_from_prediction(&out.prediction, config.hybrid.threshold),
                oracle: clearance(&env, w)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NarrowPassageResult {
        config: config.clone(),
        env_hash: env.content_hash(),
        train_seed,
        gamma: gp.spec().gamma,
        eta2: gp.eta2(),
        trajectory: traj.waypoints().to_vec(),
        report,
        trace,
    })
}

/// Rasterized C-space field of a 2-joint scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub resolution: usize,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    /// Row-major over `(theta1, theta2)`.
    pub oracle: Vec<f64>,
    pub model_mean: Option<Vec<f64>>,
    pub confidence: Option<Vec<f64>>,
}

impl FieldGrid {
    pub fn value_at(&self, i: usize, j: usize) -> f64 {
        self.oracle[i * self.resolution + j]
    }

    pub fn table(&self) -> Table {
        let mut headers = vec!["theta1", "theta2", "oracle"];
        if self.model_mean.is_some() {
            headers.extend(["model_mean", "confidence"]);
        }
        let mut t = Table::new("C-space distance field", &headers);
        for (i, a) in self.theta1.iter().enumerate() {
            for (j, b) in self.theta2.iter().enumerate() {
                let k = i * self.resolution + j;
                let mut row = vec![exact(*a), exact(*b), exact(self.oracle[k])];
                if let (Some(m), Some(c)) = (&self.model_mean, &self.confidence) {
                    row.extend([exact(m[k]), exact(c[k])]);
                }
                t.push(row);
            }
        }
        t
    }
}

/// Evaluates the oracle, and optionally a GP mean and its confidence of
/// clearance above `threshold`, on a `resolution x resolution` grid spanning
/// the joint limits.
pub fn export_cspace_field(
    env: &Environment,
    model: Option<&GpModel>,
    resolution: usize,
    threshold: f64,
) -> Result<FieldGrid> {
    if env.robot.dof() != 2 {
        return Err(Error::InvalidArgument(format!("field export needs a 2-joint robot, got {}", env.robot.dof())));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    if let Some(m) = model {
        if m.dof() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: m.dof() });
        }
    }
    let axis = |j: usize| {
        let [lo, hi] = env.robot.joint_limits()[j];
        (0..resolution).map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64).collect::<Vec<_>>()
    };
    let (theta1, theta2) = (axis(0), axis(1));
    let n = resolution * resolution;
    let mut oracle = Vec::with_capacity(n);
    let mut mean = model.map(|_| Vec::with_capacity(n));
    let mut confidence = model.map(|_| Vec::with_capacity(n));
    for a in &theta1 {
        for b in &theta2 {
            let x = [*a, *b];
            oracle.push(env.distance(&x)?);
            if let Some(m) = model {
                let p = m.predict(&x)?;
                mean.as_mut().map(|v| v.push(p.mean));
                confidence.as_mut().map(|v| v.push(confidence_from_prediction(&p, threshold)));
            }
        }
    }
    Ok(FieldGrid { resolution, theta1, theta2, oracle, model_mean: mean, confidence })
}
