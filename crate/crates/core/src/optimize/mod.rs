//! Trajectory optimization for end-effector path length under clearance
//! requirements, seeded by an RRT plan.
//!
//! The decision vector holds the `T - 2` interior waypoints; the endpoints
//! are constants. An augmented-Lagrangian (PHR) outer loop handles the
//! clearance and step inequalities, and L-BFGS minimizes each subproblem.

mod estimator;
mod lbfgs;
mod rrt;
mod trajectory;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use estimator::{Estimator, EstimatorKind};
pub use lbfgs::LbfgsOptions;
pub use rrt::{rrt_plan, shortcut_path, RrtOptions};
pub use trajectory::{path_length, resample_trajectory, Trajectory};

pub(crate) use rrt::clearance;
use lbfgs::{minimize, Objective};
use trajectory::project_steps;

use crate::error::{check_dim, Error, Result};
use crate::geometry::Environment;
use crate::hybrid::Branch;

pub const DEFAULT_WAYPOINTS: usize = 30;
pub const DEFAULT_DTHETA: f64 = 0.3;
pub const DEFAULT_D_MIN: f64 = 0.2;
/// Allowed shortfall below `d_min` for a result to count as feasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-3;
/// Step excess tolerated after projection.
pub const STEP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Minimize path length subject to `d(theta_t) >= d_min` at every waypoint.
    Constraint,
    /// Minimize `exp(-min_t d(theta_t)) * L`.
    Maximize,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Constraint => "constraint",
            Mode::Maximize => "maximize",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constraint" => Ok(Mode::Constraint),
            "maximize" => Ok(Mode::Maximize),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeProblem<'a> {
    pub env: &'a Environment,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub waypoints: usize,
    pub dtheta_max: f64,
    pub d_min: f64,
    pub mode: Mode,
}

impl<'a> OptimizeProblem<'a> {
    pub fn new(env: &'a Environment, start: Vec<f64>, goal: Vec<f64>, mode: Mode) -> Self {
        OptimizeProblem {
            env,
            start,
            goal,
            waypoints: DEFAULT_WAYPOINTS,
            dtheta_max: DEFAULT_DTHETA,
            d_min: DEFAULT_D_MIN,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let robot = &self.env.robot;
        check_dim(robot.dof(), self.start.len())?;
        check_dim(robot.dof(), self.goal.len())?;
        if !robot.within_limits(&self.start) || !robot.within_limits(&self.goal) {
            return Err(Error::InvalidArgument("endpoints must lie within joint limits".into()));
        }
        if self.waypoints < 2 {
            return Err(Error::InvalidArgument("T must be at least 2".into()));
        }
        if !(self.dtheta_max.is_finite() && self.dtheta_max > 0.0) {
            return Err(Error::InvalidArgument("dtheta_max must be positive".into()));
        }
        if self.mode == Mode::Constraint && !(self.d_min.is_finite() && self.d_min >= 0.0) {
            return Err(Error::InvalidArgument("d_min must be nonnegative".into()));
        }
        let span = trajectory::dist(&self.start, &self.goal);
        if span > (self.waypoints - 1) as f64 * self.dtheta_max + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "endpoints are {span:.3} rad apart, more than (T-1) * dtheta_max allows"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub inner: LbfgsOptions,
    pub mu_initial: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    /// Central-difference step for estimator gradients (radians).
    pub fd_step: f64,
    pub softmin_temperature: f64,
    /// Weight of constraint violation in the acceptance merit.
    pub merit_weight: f64,
    /// Constraint violation below which an outer iterate may count as converged.
    pub violation_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_outer: 20,
            inner: LbfgsOptions::default(),
            mu_initial: 10.0,
            mu_growth: 10.0,
            mu_max: 1e6,
            fd_step: 1e-6,
            softmin_temperature: 0.01,
            merit_weight: 100.0,
            violation_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub estimator: EstimatorKind,
    pub mode: Mode,
    pub waypoints: usize,
    pub path_length: f64,
    /// Final objective: `L` in constraint mode, `exp(-min d) * L` (hard min) in maximize mode.
    pub objective: f64,
    pub estimator_min_clearance: f64,
    pub oracle_min_clearance: f64,
    /// `oracle_min_clearance - d_min`; constraint mode only.
    pub slack: Option<f64>,
    pub d_min: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub estimator_calls: usize,
    pub wall_time_s: f64,
    pub status: Status,
    pub feasible: bool,
    pub max_step: f64,
    /// Merit of the seed followed by every accepted outer iterate.
    pub merit_history: Vec<f64>,
    pub branch_switches: Option<usize>,
    pub sensor_calls: Option<usize>,
    pub seed: Option<u64>,
}

/// Counts estimator calls and exposes the problem in decision-vector form.
struct Transcription<'e, 'p, 'a> {
    problem: &'e OptimizeProblem<'p>,
    estimator: &'e mut Estimator<'a>,
    options: SolverOptions,
    start_d: f64,
    goal_d: f64,
    calls: usize,
    /// Clearance multipliers, one per interior waypoint.
    lambda: Vec<f64>,
    /// Step multipliers, one per segment.
    nu: Vec<f64>,
    mu: f64,
}

/// Everything the merit and the multiplier update need at one point.
struct Evaluation {
    length: f64,
    /// Interior-waypoint distances.
    distances: Vec<f64>,
    /// `|delta_k|^2 - dtheta^2` per segment.
    steps: Vec<f64>,
}

const LENGTH_SMOOTHING: f64 = 1e-12;

impl Transcription<'_, '_, '_> {
    fn dof(&self) -> usize {
        self.problem.start.len()
    }

    fn interior(&self) -> usize {
        self.problem.waypoints - 2
    }

    fn point<'z>(&'z self, z: &'z [f64], t: usize) -> &'z [f64] {
        let d = self.dof();
        if t == 0 {
            &self.problem.start
        } else if t == self.problem.waypoints - 1 {
            &self.problem.goal
        } else {
            &z[(t - 1) * d..t * d]
        }
    }

    fn waypoints(&self, z: &[f64]) -> Vec<Vec<f64>> {
        (0..self.problem.waypoints).map(|t| self.point(z, t).to_vec()).collect()
    }

    fn distance(&mut self, x: &[f64]) -> Result<f64> {
        self.calls += 1;
        let d = self.estimator.distance(x)?;
        if d.is_nan() {
            return Err(Error::Divergence("estimator returned NaN".into()));
        }
        Ok(d)
    }

    fn distances(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        (1..self.problem.waypoints - 1).map(|t| self.distance(&z[(t - 1) * self.dof()..t * self.dof()])).collect()
    }

    fn grad_distance(&mut self, z: &[f64], t: usize, out: &mut [f64]) -> Result<()> {
        let h = self.options.fd_step;
        let mut q = self.point(z, t).to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            let orig = q[j];
            q[j] = orig + h;
            let up = self.distance(&q)?;
            q[j] = orig - h;
            let down = self.distance(&q)?;
            q[j] = orig;
            *o = (up - down) / (2.0 * h);
        }
        Ok(())
    }

    /// Smoothed path length; accumulates its gradient into `grad` when given.
    fn length(&self, z: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let robot = &self.problem.env.robot;
        let t_count = self.problem.waypoints;
        let ee: Vec<_> = (0..t_count).map(|t| robot.end_effector(self.point(z, t))).collect::<Result<_>>()?;
        let mut total = 0.0;
        let mut units = Vec::with_capacity(t_count - 1);
        for w in ee.windows(2) {
            let delta = w[1] - w[0];
            let n = (delta.norm_squared() + LENGTH_SMOOTHING).sqrt();
            total += n;
            units.push(delta / n);
        }
        if let Some(grad) = grad {
            let d = self.dof();
            for t in 1..t_count - 1 {
                let jac = robot.ee_jacobian(self.point(z, t))?;
                let w = units[t - 1] - units[t];
                for j in 0..d {
                    grad[(t - 1) * d + j] += jac[(0, j)] * w.x + jac[(1, j)] * w.y;
                }
            }
        }
        Ok(total)
    }

    fn step_values(&self, z: &[f64]) -> Vec<f64> {
        let r2 = self.problem.dtheta_max * self.problem.dtheta_max;
        (0..self.problem.waypoints - 1)
            .map(|k| {
                let (a, b) = (self.point(z, k), self.point(z, k + 1));
                a.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>() - r2
            })
            .collect()
    }

    /// PHR term `(max(0, m + mu c)^2 - m^2) / (2 mu)` and its multiplier factor.
    fn phr(&self, multiplier: f64, c: f64) -> (f64, f64) {
        let shifted = (multiplier + self.mu * c).max(0.0);
        ((shifted * shifted - multiplier * multiplier) / (2.0 * self.mu), shifted)
    }

    fn step_penalty(&self, z: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let steps = self.step_values(z);
        let mut total = 0.0;
        let d = self.dof();
        let last = self.problem.waypoints - 1;
        let mut grad = grad;
        for (k, s) in steps.iter().enumerate() {
            let (value, factor) = self.phr(self.nu[k], *s);
            total += value;
            if factor == 0.0 {
                continue;
            }
            if let Some(g) = grad.as_deref_mut() {
                let (a, b) = (self.point(z, k).to_vec(), self.point(z, k + 1).to_vec());
                for j in 0..d {
                    let diff = 2.0 * factor * (b[j] - a[j]);
                    if k + 1 < last {
                        g[k * d + j] += diff;
                    }
                    if k > 0 {
                        g[(k - 1) * d + j] -= diff;
                    }
                }
            }
        }
        total
    }

    fn softmin(&self, distances: &[f64]) -> (f64, Vec<f64>) {
        let tau = self.options.softmin_temperature;
        let all: Vec<f64> = std::iter::once(self.start_d).chain(distances.iter().copied()).chain([self.goal_d]).collect();
        let m = all.iter().copied().fold(f64::INFINITY, f64::min);
        if m == f64::INFINITY {
            return (f64::INFINITY, vec![0.0; all.len()]);
        }
        let e: Vec<f64> = all.iter().map(|d| (-(d - m) / tau).exp()).collect();
        let sum: f64 = e.iter().sum();
        (m - tau * sum.ln(), e.iter().map(|v| v / sum).collect())
    }

    fn evaluate(&mut self, z: &[f64]) -> Result<Evaluation> {
        let distances = self.distances(z)?;
        Ok(Evaluation { length: exact_length(self, z)?, distances, steps: self.step_values(z) })
    }

    fn hard_min(&self, e: &Evaluation) -> f64 {
        e.distances.iter().copied().chain([self.start_d, self.goal_d]).fold(f64::INFINITY, f64::min)
    }

    fn objective_of(&self, e: &Evaluation) -> f64 {
        match self.problem.mode {
            Mode::Constraint => e.length,
            Mode::Maximize => (-self.hard_min(e)).exp() * e.length,
        }
    }

    fn violations(&self, e: &Evaluation) -> (f64, f64) {
        let step = e.steps.iter().fold(0.0f64, |m, s| m.max(*s));
        let clear = match self.problem.mode {
            Mode::Constraint => e.distances.iter().fold(0.0f64, |m, d| m.max(self.problem.d_min - d)),
            Mode::Maximize => 0.0,
        };
        (clear, step)
    }

    fn merit(&self, e: &Evaluation) -> f64 {
        let mut penalty: f64 = e.steps.iter().map(|s| s.max(0.0)).sum();
        if self.problem.mode == Mode::Constraint {
            penalty += e.distances.iter().map(|d| (self.problem.d_min - d).max(0.0)).sum::<f64>();
        }
        self.objective_of(e) + self.options.merit_weight * penalty
    }

    fn update_multipliers(&mut self, e: &Evaluation) {
        if self.problem.mode == Mode::Constraint {
            for (l, d) in self.lambda.iter_mut().zip(&e.distances) {
                *l = (*l + self.mu * (self.problem.d_min - d)).max(0.0);
            }
        }
        for (n, s) in self.nu.iter_mut().zip(&e.steps) {
            *n = (*n + self.mu * s).max(0.0);
        }
    }
}

fn exact_length(tr: &Transcription<'_, '_, '_>, z: &[f64]) -> Result<f64> {
    let robot = &tr.problem.env.robot;
    let ee: Vec<_> = (0..tr.problem.waypoints).map(|t| robot.end_effector(tr.point(z, t))).collect::<Result<_>>()?;
    Ok(ee.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

impl Objective for Transcription<'_, '_, '_> {
    fn value(&mut self, z: &[f64]) -> Result<f64> {
        self.augmented(z, None)
    }

    fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.augmented(z, Some(grad))
    }
}

impl Transcription<'_, '_, '_> {
    fn augmented(&mut self, z: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let d = self.dof();
        let distances = self.distances(z)?;
        let mut scratch = vec![0.0; d];
        let value = match self.problem.mode {
            Mode::Constraint => {
                let mut total = self.length(z, grad.as_deref_mut())?;
                for (i, di) in distances.iter().enumerate() {
                    let (v, factor) = self.phr(self.lambda[i], self.problem.d_min - di);
                    total += v;
                    if factor > 0.0 {
                        if let Some(g) = grad.as_deref_mut() {
                            self.grad_distance(z, i + 1, &mut scratch)?;
                            for j in 0..d {
                                g[i * d + j] -= factor * scratch[j];
                            }
                        }
                    }
                }
                total
            }
            Mode::Maximize => {
                let (s, weights) = self.softmin(&distances);
                let scale = (-s).exp();
                let mut length_grad = vec![0.0; z.len()];
                let length = self.length(z, grad.is_some().then_some(&mut length_grad[..]))?;
                let value = scale * length;
                if let Some(g) = grad.as_deref_mut() {
                    for (gi, lg) in g.iter_mut().zip(&length_grad) {
                        *gi += scale * lg;
                    }
                    for i in 0..self.interior() {
                        let w = weights[i + 1];
                        if w < 1e-12 {
                            continue;
                        }
                        self.grad_distance(z, i + 1, &mut scratch)?;
                        for j in 0..d {
                            g[i * d + j] -= value * w * scratch[j];
                        }
                    }
                }
                value
            }
        };
        let total = value + self.step_penalty(z, grad);
        if total.is_nan() {
            return Err(Error::Divergence("augmented objective is NaN".into()));
        }
        Ok(total)
    }
}

/// Optimizes from `seed`; the report's `seed` field is left for the caller.
pub fn optimize(
    problem: &OptimizeProblem<'_>,
    estimator: &mut Estimator<'_>,
    seed: &Trajectory,
    options: &SolverOptions,
) -> Result<(Trajectory, OptimizeReport)> {
    problem.validate()?;
    if seed.len() != problem.waypoints {
        return Err(Error::InvalidArgument(format!("seed has {} waypoints, expected {}", seed.len(), problem.waypoints)));
    }
    if seed.start() != problem.start.as_slice() || seed.goal() != problem.goal.as_slice() {
        return Err(Error::InvalidArgument("seed endpoints differ from the problem endpoints".into()));
    }
    let clock = Instant::now();
    let kind = estimator.kind();
    let mut waypoints = seed.waypoints().to_vec();
    project(problem, &mut waypoints)?;

    let n_interior = problem.waypoints - 2;
    let mut tr = Transcription {
        problem,
        estimator,
        options: *options,
        start_d: 0.0,
        goal_d: 0.0,
        calls: 0,
        lambda: vec![0.0; n_interior],
        nu: vec![0.0; problem.waypoints - 1],
        mu: options.mu_initial,
    };
    tr.start_d = tr.distance(&problem.start)?;
    tr.goal_d = tr.distance(&problem.goal)?;

    let mut z: Vec<f64> = waypoints[1..problem.waypoints - 1].concat();
    let mut eval = tr.evaluate(&z)?;
    let mut best_merit = tr.merit(&eval);
    let mut merit_history = vec![best_merit];
    let mut prev_violation = f64::INFINITY;
    let mut status = Status::MaxIters;
    let mut outer_iterations = 0;
    let mut inner_iterations = 0;

    if n_interior > 0 {
        for _ in 0..options.max_outer {
            outer_iterations += 1;
            let result = minimize(&mut tr, &z, &options.inner)?;
            inner_iterations += result.iterations;
            log::debug!("inner solve: {} iterations, lagrangian {:.6}", result.iterations, result.value);
            let mut candidate = tr.waypoints(&result.z);
            project(problem, &mut candidate)?;
            let z_new: Vec<f64> = candidate[1..problem.waypoints - 1].concat();
            let eval_new = tr.evaluate(&z_new)?;
            let merit_new = tr.merit(&eval_new);
            if merit_new.is_nan() {
                return Err(Error::Divergence("merit is NaN".into()));
            }
            if merit_new <= best_merit {
                let improvement = best_merit - merit_new;
                z = z_new;
                eval = eval_new;
                best_merit = merit_new;
                merit_history.push(merit_new);
                tr.update_multipliers(&eval);
                let (clear, step) = tr.violations(&eval);
                let violation = clear.max(step);
                if violation > 0.25 * prev_violation {
                    tr.mu = (tr.mu * options.mu_growth).min(options.mu_max);
                }
                prev_violation = violation;
                if violation <= options.violation_tolerance && improvement <= 1e-6 * best_merit.abs().max(1.0) {
                    status = Status::Converged;
                    break;
                }
            } else {
                if tr.mu >= options.mu_max {
                    break;
                }
                tr.mu = (tr.mu * options.mu_growth).min(options.mu_max);
            }
        }
    } else {
        status = Status::Converged;
    }

    let final_waypoints = tr.waypoints(&z);
    let traj = Trajectory::new(final_waypoints)?;
    let estimator_min = tr.hard_min(&eval);
    let objective = tr.objective_of(&eval);
    let calls = tr.calls;
    let estimator = tr.estimator;
    let oracle_min = traj
        .waypoints()
        .iter()
        .map(|w| clearance(problem.env, w))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let branch_switches = branch_switches(estimator, &traj)?;
    let max_step = traj.max_step();
    let steps_ok = max_step <= problem.dtheta_max + STEP_TOLERANCE;
    let feasible = steps_ok
        && match problem.mode {
            Mode::Constraint => estimator_min >= problem.d_min - FEASIBILITY_TOLERANCE,
            Mode::Maximize => true,
        };
    let report = OptimizeReport {
        estimator: kind,
        mode: problem.mode,
        waypoints: problem.waypoints,
        path_length: path_length(&traj, &problem.env.robot)?,
        objective,
        estimator_min_clearance: estimator_min,
        oracle_min_clearance: oracle_min,
        slack: (problem.mode == Mode::Constraint).then_some(oracle_min - problem.d_min),
        d_min: problem.d_min,
        outer_iterations,
        inner_iterations,
        estimator_calls: calls,
        wall_time_s: clock.elapsed().as_secs_f64(),
        status,
        feasible,
        max_step,
        merit_history,
        branch_switches,
        sensor_calls: estimator.sensor_calls(),
        seed: None,
    };
    Ok((traj, report))
}

fn project(problem: &OptimizeProblem<'_>, waypoints: &mut [Vec<f64>]) -> Result<()> {
    let excess = project_steps(waypoints, problem.dtheta_max, 20_000);
    if excess > STEP_TOLERANCE {
        return Err(Error::Divergence(format!("step projection left an excess of {excess:e}")));
    }
    Ok(())
}

fn branch_switches(estimator: &Estimator<'_>, traj: &Trajectory) -> Result<Option<usize>> {
    let branches: Vec<Option<Branch>> = traj.waypoints().iter().map(|w| estimator.branch_at(w)).collect::<Result<_>>()?;
    if branches.iter().any(Option::is_none) {
        return Ok(None);
    }
    Ok(Some(branches.windows(2).filter(|w| w[0] != w[1]).count()))
}

pub fn optimize_constraint(
    problem: &OptimizeProblem<'_>,
    estimator: &mut Estimator<'_>,
    seed: &Trajectory,
    options: &SolverOptions,
) -> Result<(Trajectory, OptimizeReport)> {
    if problem.mode != Mode::Constraint {
        return Err(Error::InvalidArgument("optimize_constraint needs a constraint-mode problem".into()));
    }
    optimize(problem, estimator, seed, options)
}

pub fn optimize_maximize(
    problem: &OptimizeProblem<'_>,
    estimator: &mut Estimator<'_>,
    seed: &Trajectory,
    options: &SolverOptions,
) -> Result<(Trajectory, OptimizeReport)> {
    if problem.mode != Mode::Maximize {
        return Err(Error::InvalidArgument("optimize_maximize needs a maximize-mode problem".into()));
    }
    optimize(problem, estimator, seed, options)
}

/// RRT plan from `start` to `goal`, shortcut and resampled to `t` waypoints.
pub fn seed_trajectory<R: rand::Rng + ?Sized>(
    env: &Environment,
    start: &[f64],
    goal: &[f64],
    t: usize,
    rng: &mut R,
    opts: &RrtOptions,
) -> Result<Trajectory> {
    let plan = rrt_plan(env, start, goal, rng, opts)?;
    let short = shortcut_path(env, &plan, opts)?;
    resample_trajectory(&short, t)
}
