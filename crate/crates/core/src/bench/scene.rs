//! Random benchmark scenes and the two-obstacle narrow passage.

use std::f64::consts::{FRAC_PI_2, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Environment};
use crate::kinematics::{RobotModel, DEFAULT_LINK_WIDTH};
use crate::optimize::{clearance, Trajectory};
use crate::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub dof: usize,
    pub link_length: f64,
    pub link_width: f64,
    pub obstacles: usize,
    /// Obstacle centroids are uniform by area in this annulus around the base.
    pub centroid_radius: [f64; 2],
    /// Polar-angle range of obstacle centroids. The problem is rotation
    /// invariant apart from the shoulder limit at `±pi`, so keeping obstacles
    /// away from it loses no generality and leaves room on both sides.
    pub bearing: [f64; 2],
    /// Circumradius range of each obstacle.
    pub obstacle_radius: [f64; 2],
    pub vertices: [usize; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            dof: 7,
            link_length: 1.0,
            link_width: DEFAULT_LINK_WIDTH,
            obstacles: 1,
            centroid_radius: [2.0, 4.5],
            bearing: [-FRAC_PI_2, FRAC_PI_2],
            obstacle_radius: [0.5, 1.0],
            vertices: [3, 8],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |[lo, hi]: [f64; 2]| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi;
        if self.dof == 0 || self.obstacles == 0 {
            return Err(Error::InvalidArgument("a scene needs at least one joint and one obstacle".into()));
        }
        if !ordered(self.centroid_radius) || !ordered(self.obstacle_radius) {
            return Err(Error::InvalidArgument("radius ranges must satisfy 0 < lo <= hi".into()));
        }
        let [b0, b1] = self.bearing;
        if !(b0.is_finite() && b1.is_finite() && b0 <= b1) {
            return Err(Error::InvalidArgument("bearing range must satisfy lo <= hi".into()));
        }
        if self.vertices[0] < 3 || self.vertices[0] > self.vertices[1] {
            return Err(Error::InvalidArgument("vertex counts must satisfy 3 <= lo <= hi".into()));
        }
        Ok(())
    }

    pub fn robot(&self) -> Result<RobotModel> {
        RobotModel::new(
            vec![self.link_length; self.dof],
            self.link_width,
            vec![[-std::f64::consts::PI, std::f64::consts::PI]; self.dof],
        )
    }
}

/// Convex polygon with `n` vertices on a circle, at jittered even angles.
pub fn random_convex_polygon<R: Rng + ?Sized>(rng: &mut R, center: Vec2, radius: f64, n: usize) -> Result<ConvexPolygon> {
    if n < 3 {
        return Err(Error::InvalidPolygon(format!("{n} vertices, need at least 3")));
    }
    let spacing = TAU / n as f64;
    let phase = rng.random_range(0.0..TAU);
    let vertices = (0..n)
        .map(|k| {
            // jitter below half the spacing keeps the angles strictly increasing
            let a = phase + spacing * (k as f64 + rng.random_range(-0.3..0.3));
            center + radius * Vec2::new(a.cos(), a.sin())
        })
        .collect();
    ConvexPolygon::new(vertices)
}

pub fn random_environment<R: Rng + ?Sized>(config: &SceneConfig, rng: &mut R) -> Result<Environment> {
    config.validate()?;
    let robot = config.robot()?;
    let [r_lo, r_hi] = config.centroid_radius;
    let obstacles = (0..config.obstacles)
        .map(|_| {
            let r = rng.random_range(r_lo * r_lo..=r_hi * r_hi).sqrt();
            let phi = rng.random_range(config.bearing[0]..=config.bearing[1]);
            let size = rng.random_range(config.obstacle_radius[0]..=config.obstacle_radius[1]);
            let n = rng.random_range(config.vertices[0]..=config.vertices[1]);
            random_convex_polygon(rng, r * Vec2::new(phi.cos(), phi.sin()), size, n)
        })
        .collect::<Result<_>>()?;
    Ok(Environment::new(robot, obstacles))
}

/// Draws start and goal configurations on opposite sides of the first
/// obstacle: both clear it by `min_clearance`, and the straight C-space
/// segment between them collides, so any valid plan must go around. Fails
/// when the obstacle sits too close to the shoulder's joint limit.
pub fn sample_endpoints<R: Rng + ?Sized>(
    env: &Environment,
    rng: &mut R,
    min_clearance: f64,
    max_span: f64,
    max_attempts: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let obstacle = env.obstacles.first().ok_or_else(|| Error::InvalidEnvironment("no obstacles".into()))?;
    let c = obstacle.centroid();
    let phi = c.y.atan2(c.x);
    let dof = env.robot.dof();
    let limits = env.robot.joint_limits();
    for _ in 0..max_attempts {
        let mut start = vec![0.0; dof];
        let mut goal = vec![0.0; dof];
        // no wrapping: the segment between the endpoints must sweep across the obstacle
        start[0] = phi + rng.random_range(0.5..1.2);
        goal[0] = phi - rng.random_range(0.5..1.2);
        for j in 1..dof {
            start[j] = rng.random_range(-0.4..0.4);
            goal[j] = rng.random_range(-0.4..0.4);
        }
        let inside = |q: &[f64]| q.iter().zip(limits).all(|(v, [lo, hi])| (*lo..=*hi).contains(v));
        if !inside(&start) || !inside(&goal) {
            continue;
        }
        let span = start.iter().zip(&goal).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if span > max_span {
            continue;
        }
        if clearance(env, &start)? < min_clearance || clearance(env, &goal)? < min_clearance {
            continue;
        }
        let line = Trajectory::straight(&start, &goal, 50)?;
        let mut blocked = false;
        for w in line.waypoints() {
            if clearance(env, w)? < 0.0 {
                blocked = true;
                break;
            }
        }
        if blocked {
            return Ok((start, goal));
        }
    }
    Err(Error::InvalidArgument(format!("no separated start/goal pair found in {max_attempts} attempts")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrowPassageConfig {
    pub dof: usize,
    pub link_width: f64,
    /// Free width at the deep end of the slot.
    pub gap: f64,
    /// Free width at the mouth; the walls taper linearly down to `gap`.
    pub mouth_gap: f64,
    /// Radial extent `[x_mouth, x_deep]` of both blocks.
    pub extent: [f64; 2],
    /// Height of each block.
    pub thickness: f64,
}

impl Default for NarrowPassageConfig {
    fn default() -> Self {
        NarrowPassageConfig {
            dof: 7,
            link_width: DEFAULT_LINK_WIDTH,
            // three and six link widths
            gap: 0.3,
            mouth_gap: 0.6,
            extent: [4.0, 7.0],
            thickness: 1.0,
        }
    }
}

/// Two blocks straddling the x-axis with a tapered slot between them. The
/// goal (all joints zero) stretches the arm along the axis so its tip meets
/// the deep end, where clearance is smallest; the start points the arm
/// straight up.
pub fn narrow_passage(config: &NarrowPassageConfig) -> Result<(Environment, Vec<f64>, Vec<f64>)> {
    if !(config.gap > config.link_width) {
        return Err(Error::InvalidArgument("gap must exceed the link width".into()));
    }
    if !(config.mouth_gap >= config.gap) {
        return Err(Error::InvalidArgument("mouth_gap must be at least gap".into()));
    }
    let [x0, x1] = config.extent;
    if !(0.0 < x0 && x0 < x1) || !(config.thickness > 0.0) {
        return Err(Error::InvalidArgument("need 0 < x_mouth < x_deep and positive thickness".into()));
    }
    let robot = RobotModel::new(
        vec![1.0; config.dof],
        config.link_width,
        vec![[-std::f64::consts::PI, std::f64::consts::PI]; config.dof],
    )?;
    let (hm, hd, t) = (0.5 * config.mouth_gap, 0.5 * config.gap, config.thickness);
    let upper = ConvexPolygon::new(vec![Vec2::new(x0, hm), Vec2::new(x1, hd), Vec2::new(x1, hd + t), Vec2::new(x0, hm + t)])?;
    let lower =
        ConvexPolygon::new(vec![Vec2::new(x0, -hm - t), Vec2::new(x1, -hd - t), Vec2::new(x1, -hd), Vec2::new(x0, -hm)])?;
    let mut start = vec![0.0; config.dof];
    start[0] = FRAC_PI_2;
    Ok((Environment::new(robot, vec![upper, lower]), start, vec![0.0; config.dof]))
}
