//! Planar serial-chain forward kinematics.
//!
//! The base sits at the workspace origin with zero orientation. Joint `k`
//! rotates link `k` and everything distal to it, so the absolute orientation
//! of link `k` is the running sum of the first `k + 1` joint angles. Control
//! points are the distal endpoints of the links (one per link).

use std::f64::consts::PI;

use nalgebra::Matrix2xX;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexPolygon;
use crate::Vec2;

pub const DEFAULT_LINK_WIDTH: f64 = 0.1;

/// Geometry of a planar chain of revolute joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotSpec", into = "RobotSpec")]
pub struct RobotModel {
    link_lengths: Vec<f64>,
    link_width: f64,
    joint_limits: Vec<[f64; 2]>,
}

/// Serialized form of [`RobotModel`]; `dof` is redundant and cross-checked.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSpec {
    dof: usize,
    link_lengths: Vec<f64>,
    link_width: f64,
    joint_limits: Vec<[f64; 2]>,
}

impl TryFrom<RobotSpec> for RobotModel {
    type Error = Error;

    fn try_from(spec: RobotSpec) -> Result<Self> {
        if spec.dof != spec.link_lengths.len() {
            return Err(Error::InvalidRobot(format!(
                "dof {} but {} link lengths",
                spec.dof,
                spec.link_lengths.len()
            )));
        }
        RobotModel::new(spec.link_lengths, spec.link_width, spec.joint_limits)
    }
}

impl From<RobotModel> for RobotSpec {
    fn from(r: RobotModel) -> Self {
        RobotSpec {
            dof: r.dof(),
            link_lengths: r.link_lengths,
            link_width: r.link_width,
            joint_limits: r.joint_limits,
        }
    }
}

/// Origin and absolute orientation of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub origin: Vec2,
    pub angle: f64,
}

impl RobotModel {
    pub fn new(link_lengths: Vec<f64>, link_width: f64, joint_limits: Vec<[f64; 2]>) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::InvalidRobot("at least one link required".into()));
        }
        if link_lengths.len() != joint_limits.len() {
            return Err(Error::InvalidRobot(format!(
                "{} link lengths but {} joint limits",
                link_lengths.len(),
                joint_limits.len()
            )));
        }
        if let Some(l) = link_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidRobot(format!("link length {l} must be positive")));
        }
        if !(link_width.is_finite() && link_width > 0.0) {
            return Err(Error::InvalidRobot(format!("link width {link_width} must be positive")));
        }
        if let Some([lo, hi]) = joint_limits.iter().find(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi)) {
            return Err(Error::InvalidRobot(format!("joint limit [{lo}, {hi}] is empty")));
        }
        Ok(RobotModel { link_lengths, link_width, joint_limits })
    }

    /// `dof` unit links of the default width with limits `[-pi, pi]`.
    pub fn uniform(dof: usize, link_length: f64) -> Result<Self> {
        Self::new(vec![link_length; dof], DEFAULT_LINK_WIDTH, vec![[-PI, PI]; dof])
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    /// Number of FK-kernel control points (one per link).
    pub fn num_control_points(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn link_lengths(&self) -> &[f64] {
        &self.link_lengths
    }

    pub fn link_width(&self) -> f64 {
        self.link_width
    }

    pub fn joint_limits(&self) -> &[[f64; 2]] {
        &self.joint_limits
    }

    /// Total length of the chain, an upper bound on the reach.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn within_limits(&self, x: &[f64]) -> bool {
        x.len() == self.dof() && x.iter().zip(&self.joint_limits).all(|(q, [lo, hi])| *q >= *lo && *q <= *hi)
    }

    pub fn link_poses(&self, x: &[f64]) -> Result<Vec<Pose>> {
        check_dim(self.dof(), x.len())?;
        let mut poses = Vec::with_capacity(self.dof());
        let mut origin = Vec2::zeros();
        let mut angle = 0.0;
        for (len, q) in self.link_lengths.iter().zip(x) {
            angle += q;
            poses.push(Pose { origin, angle });
            origin += *len * Vec2::new(angle.cos(), angle.sin());
        }
        Ok(poses)
    }

    pub fn control_points(&self, x: &[f64]) -> Result<Vec<Vec2>> {
        check_dim(self.dof(), x.len())?;
        let mut out = Vec::with_capacity(self.dof());
        self.for_each_distal_end(x, |_, p| out.push(p));
        Ok(out)
    }

    /// Writes control points as interleaved `x, y` pairs into `out` (length `2 * dof`).
    pub fn control_points_flat(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dof(), x.len())?;
        check_dim(2 * self.dof(), out.len())?;
        self.for_each_distal_end(x, |k, p| {
            out[2 * k] = p.x;
            out[2 * k + 1] = p.y;
        });
        Ok(())
    }

    fn for_each_distal_end(&self, x: &[f64], mut f: impl FnMut(usize, Vec2)) {
        let mut p = Vec2::zeros();
        let mut angle = 0.0;
        for (k, (len, q)) in self.link_lengths.iter().zip(x).enumerate() {
            angle += q;
            let (s, c) = angle.sin_cos();
            p += Vec2::new(len * c, len * s);
            f(k, p);
        }
    }

    pub fn end_effector(&self, x: &[f64]) -> Result<Vec2> {
        check_dim(self.dof(), x.len())?;
        let mut ee = Vec2::zeros();
        self.for_each_distal_end(x, |_, p| ee = p);
        Ok(ee)
    }

    /// One rectangle per link, `link_width` wide and centred on the link axis.
    pub fn link_bodies(&self, x: &[f64]) -> Result<Vec<ConvexPolygon>> {
        let poses = self.link_poses(x)?;
        Ok(poses
            .iter()
            .zip(&self.link_lengths)
            .map(|(pose, len)| ConvexPolygon::from_ccw_unchecked(self.link_corners(pose, *len).to_vec()))
            .collect())
    }

    /// Corners of a link rectangle in counter-clockwise order.
    pub(crate) fn link_corners(&self, pose: &Pose, len: f64) -> [Vec2; 4] {
        let (s, c) = pose.angle.sin_cos();
        let along = Vec2::new(c, s) * len;
        let half = Vec2::new(-s, c) * (0.5 * self.link_width);
        let o = pose.origin;
        [o - half, o + along - half, o + along + half, o + half]
    }

    /// Jacobian of the end-effector position with respect to the joint angles.
    pub fn ee_jacobian(&self, x: &[f64]) -> Result<Matrix2xX<f64>> {
        let poses = self.link_poses(x)?;
        let ee = self.end_effector(x)?;
        let mut jac = Matrix2xX::zeros(self.dof());
        for (j, pose) in poses.iter().enumerate() {
            let r = ee - pose.origin;
            jac[(0, j)] = -r.y;
            jac[(1, j)] = r.x;
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Independent reference: chain of 3x3 homogeneous transforms.
    fn homogeneous_chain(lengths: &[f64], x: &[f64]) -> Vec<Vec2> {
        let mut t = nalgebra::Matrix3::<f64>::identity();
        let mut out = Vec::new();
        for (l, q) in lengths.iter().zip(x) {
            let (s, c) = q.sin_cos();
            let rot = nalgebra::Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
            let trans = nalgebra::Matrix3::new(1.0, 0.0, *l, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
            t = t * rot * trans;
            out.push(Vec2::new(t[(0, 2)], t[(1, 2)]));
        }
        out
    }

    fn random_config(rng: &mut impl Rng, dof: usize) -> Vec<f64> {
        (0..dof).map(|_| rng.random_range(-PI..PI)).collect()
    }

    #[test]
    fn zero_config_poses() {
        let robot = RobotModel::uniform(4, 1.0).unwrap();
        let poses = robot.link_poses(&[0.0; 4]).unwrap();
        for (k, p) in poses.iter().enumerate() {
            assert_eq!(p.origin, Vec2::new(k as f64, 0.0));
            assert_eq!(p.angle, 0.0);
        }
        let cps = robot.control_points(&[0.0; 4]).unwrap();
        assert_eq!(cps.len(), 4);
        for (k, p) in cps.iter().enumerate() {
            assert_eq!(*p, Vec2::new((k + 1) as f64, 0.0));
        }
        assert_eq!(robot.end_effector(&[0.0; 4]).unwrap(), Vec2::new(4.0, 0.0));
    }

    #[test]
    fn hand_computed_end_effectors() {
        let one = RobotModel::uniform(1, 1.0).unwrap();
        let ee = one.end_effector(&[FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(ee.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ee.y, 1.0, epsilon = 1e-12);

        let two = RobotModel::uniform(2, 1.0).unwrap();
        let ee = two.end_effector(&[FRAC_PI_2, -FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(ee.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ee.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_homogeneous_transform_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lengths = vec![1.0, 0.7, 1.3, 0.5, 1.0, 2.0, 0.9];
        let robot = RobotModel::new(lengths.clone(), 0.1, vec![[-PI, PI]; 7]).unwrap();
        for _ in 0..200 {
            let x = random_config(&mut rng, 7);
            let reference = homogeneous_chain(&lengths, &x);
            let cps = robot.control_points(&x).unwrap();
            for (a, b) in cps.iter().zip(&reference) {
                assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-12);
                assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-12);
            }
            assert_eq!(*cps.last().unwrap(), robot.end_effector(&x).unwrap());
        }
    }

    #[test]
    fn link_lengths_preserved_and_periodic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let robot = RobotModel::uniform(7, 1.0).unwrap();
        for _ in 0..100 {
            let x = random_config(&mut rng, 7);
            let cps = robot.control_points(&x).unwrap();
            let mut prev = Vec2::zeros();
            for p in &cps {
                assert_abs_diff_eq!((p - prev).norm(), 1.0, epsilon = 1e-12);
                prev = *p;
            }
            let j = rng.random_range(0..7);
            let mut shifted = x.clone();
            shifted[j] += 2.0 * PI;
            for (a, b) in cps.iter().zip(robot.control_points(&shifted).unwrap()) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn link_body_rectangle() {
        let robot = RobotModel::uniform(1, 1.0).unwrap();
        let body = &robot.link_bodies(&[0.0]).unwrap()[0];
        let expected = [(0.0, -0.05), (1.0, -0.05), (1.0, 0.05), (0.0, 0.05)];
        for (v, (ex, ey)) in body.vertices().iter().zip(expected) {
            assert_abs_diff_eq!(v.x, ex, epsilon = 1e-15);
            assert_abs_diff_eq!(v.y, ey, epsilon = 1e-15);
        }

        let theta = 0.8;
        let rotated = &robot.link_bodies(&[theta]).unwrap()[0];
        let rot = nalgebra::Rotation2::new(theta);
        for (v, w) in body.vertices().iter().zip(rotated.vertices()) {
            assert!((rot * v - w).norm() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let robot = RobotModel::new(vec![1.0, 2.0, 0.5], 0.2, vec![[-PI, PI]; 3]).unwrap();
        for _ in 0..50 {
            let x = random_config(&mut rng, 3);
            for (body, len) in robot.link_bodies(&x).unwrap().iter().zip(robot.link_lengths()) {
                assert_abs_diff_eq!(body.area(), len * 0.2, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobian_examples() {
        let robot = RobotModel::uniform(5, 1.0).unwrap();
        let jac = robot.ee_jacobian(&[0.0; 5]).unwrap();
        assert_eq!(jac[(0, 0)], 0.0);
        assert_eq!(jac[(1, 0)], 5.0);
        let one = RobotModel::uniform(1, 1.0).unwrap();
        let jac = one.ee_jacobian(&[0.0]).unwrap();
        assert_eq!((jac[(0, 0)], jac[(1, 0)]), (0.0, 1.0));
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let robot = RobotModel::uniform(7, 1.0).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x = random_config(&mut rng, 7);
            let jac = robot.ee_jacobian(&x).unwrap();
            for j in 0..7 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (robot.end_effector(&xp).unwrap() - robot.end_effector(&xm).unwrap()) / (2.0 * h);
                assert!((fd.x - jac[(0, j)]).abs() < 1e-5);
                assert!((fd.y - jac[(1, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let robot = RobotModel::uniform(3, 1.0).unwrap();
        assert!(matches!(robot.link_poses(&[0.0; 2]), Err(Error::DimensionMismatch { expected: 3, got: 2 })));
        assert!(robot.control_points(&[0.0; 4]).is_err());
        assert!(robot.end_effector(&[]).is_err());
        assert!(robot.link_bodies(&[0.0]).is_err());
        assert!(robot.ee_jacobian(&[0.0; 5]).is_err());
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(RobotModel::new(vec![], 0.1, vec![]).is_err());
        assert!(RobotModel::new(vec![1.0, -1.0], 0.1, vec![[-1.0, 1.0]; 2]).is_err());
        assert!(RobotModel::new(vec![1.0], 0.0, vec![[-1.0, 1.0]]).is_err());
        assert!(RobotModel::new(vec![1.0], 0.1, vec![[1.0, -1.0]]).is_err());
        assert!(RobotModel::new(vec![1.0], 0.1, vec![]).is_err());
        let parsed: std::result::Result<RobotModel, _> = serde_json::from_str(
            r#"{"dof": 2, "link_lengths": [1.0], "link_width": 0.1, "joint_limits": [[-1, 1]]}"#,
        );
        assert!(parsed.is_err());
    }
}
