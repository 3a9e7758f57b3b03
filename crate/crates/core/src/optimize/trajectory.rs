use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::RobotModel;

/// A sequence of configurations; the first and last are the pinned endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec<f64>>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidArgument(format!("trajectory needs T >= 2 waypoints, got {}", waypoints.len())));
        }
        let dof = waypoints[0].len();
        if dof == 0 {
            return Err(Error::InvalidArgument("waypoints must have at least one joint".into()));
        }
        for w in &waypoints {
            check_dim(dof, w.len())?;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite waypoint".into()));
            }
        }
        Ok(Trajectory { waypoints })
    }

    /// Straight C-space line with `t` evenly spaced waypoints.
    pub fn straight(start: &[f64], goal: &[f64], t: usize) -> Result<Self> {
        check_dim(start.len(), goal.len())?;
        resample_trajectory(&[start.to_vec(), goal.to_vec()], t)
    }

    pub fn waypoints(&self) -> &[Vec<f64>] {
        &self.waypoints
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.waypoints[0]
    }

    pub fn goal(&self) -> &[f64] {
        &self.waypoints[self.waypoints.len() - 1]
    }

    /// Largest Euclidean joint-space step between consecutive waypoints.
    pub fn max_step(&self) -> f64 {
        self.waypoints.windows(2).map(|w| dist(&w[0], &w[1])).fold(0.0, f64::max)
    }

    pub fn into_waypoints(self) -> Vec<Vec<f64>> {
        self.waypoints
    }

    pub fn to_text(&self) -> String {
        let mut s: String = (1..=self.dof()).map(|i| format!("theta{i}")).collect::<Vec<_>>().join(",");
        s.push('\n');
        for w in &self.waypoints {
            let row: Vec<String> = w.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty trajectory file".into() })?;
        let dof = header.split(',').count();
        let mut waypoints = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
            if row.len() != dof {
                return Err(Error::Parse { line: i + 1, msg: format!("expected {dof} columns, found {}", row.len()) });
            }
            waypoints.push(row);
        }
        Trajectory::new(waypoints)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Trajectory::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Reparameterizes `path` by C-space arc length into `t` evenly spaced waypoints.
pub fn resample_trajectory(path: &[Vec<f64>], t: usize) -> Result<Trajectory> {
    if t < 2 {
        return Err(Error::InvalidArgument(format!("T = {t} must be at least 2")));
    }
    let first = path.first().ok_or_else(|| Error::InvalidArgument("empty path".into()))?;
    for p in path {
        check_dim(first.len(), p.len())?;
    }
    let mut cumulative = vec![0.0];
    for w in path.windows(2) {
        cumulative.push(cumulative.last().unwrap() + dist(&w[0], &w[1]));
    }
    let total = *cumulative.last().unwrap();
    let last = &path[path.len() - 1];
    let mut out = Vec::with_capacity(t);
    out.push(first.clone());
    let mut seg = 0;
    for k in 1..t - 1 {
        let s = total * k as f64 / (t - 1) as f64;
        while seg + 1 < path.len() - 1 && cumulative[seg + 1] < s {
            seg += 1;
        }
        if path.len() == 1 || total == 0.0 {
            out.push(first.clone());
            continue;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let u = if len > 0.0 { ((s - cumulative[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[seg].iter().zip(&path[seg + 1]).map(|(a, b)| a + u * (b - a)).collect());
    }
    out.push(last.clone());
    Trajectory::new(out)
}

/// Sum of end-effector displacements between consecutive waypoints.
pub fn path_length(traj: &Trajectory, robot: &RobotModel) -> Result<f64> {
    let ee: Vec<_> = traj.waypoints.iter().map(|w| robot.end_effector(w)).collect::<Result<_>>()?;
    Ok(ee.windows(2).map(|w| (w[1] - w[0]).norm()).sum())
}

/// Cyclic projection onto the step sets `|theta_{t+1} - theta_t| <= radius` with
/// the endpoints held fixed. Returns the largest remaining step excess.
pub(crate) fn project_steps(waypoints: &mut [Vec<f64>], radius: f64, max_sweeps: usize) -> f64 {
    let t = waypoints.len();
    for _ in 0..max_sweeps {
        let mut excess = 0.0;
        for k in 0..t - 1 {
            let d = dist(&waypoints[k], &waypoints[k + 1]);
            if d <= radius {
                continue;
            }
            excess = f64::max(excess, d - radius);
            let (left_fixed, right_fixed) = (k == 0, k + 1 == t - 1);
            let (a, b) = (waypoints[k].clone(), waypoints[k + 1].clone());
            match (left_fixed, right_fixed) {
                (true, true) => {}
                (true, false) => {
                    for j in 0..a.len() {
                        waypoints[k + 1][j] = a[j] + (b[j] - a[j]) * radius / d;
                    }
                }
                (false, true) => {
                    for j in 0..a.len() {
                        waypoints[k][j] = b[j] + (a[j] - b[j]) * radius / d;
                    }
                }
                (false, false) => {
                    for j in 0..a.len() {
                        let mid = 0.5 * (a[j] + b[j]);
                        let half = 0.5 * (b[j] - a[j]) * radius / d;
                        waypoints[k][j] = mid - half;
                        waypoints[k + 1][j] = mid + half;
                    }
                }
            }
        }
        if excess == 0.0 {
            break;
        }
    }
    waypoints.windows(2).map(|w| dist(&w[0], &w[1]) - radius).fold(0.0, f64::max)
}
