//! Convex polygon distance queries and the distance-to-collision oracle.
//!
//! Separation distances come from GJK on the Minkowski difference, and
//! penetration depths from EPA edge expansion seeded with the terminal GJK
//! simplex. [`signed_distance`] glues the two into a field that is positive
//! when disjoint, negative when penetrating and zero at touching contact.

mod epa;
mod gjk;
mod polygon;

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::RobotModel;
use crate::Vec2;

pub use epa::epa_penetration;
pub use gjk::{gjk_distance, GjkOutcome, Simplex};
pub use polygon::{support, ConvexPolygon, Support};

/// Depths at or below this are reported as touching contact (`0.0`).
pub const CONTACT_TOLERANCE: f64 = 1e-12;

/// Signed separation of two convex bodies: the GJK distance when disjoint,
/// the negated EPA penetration depth when they overlap.
pub fn signed_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> Result<f64> {
    signed_distance_between(a.vertices(), b.vertices())
}

pub(crate) fn signed_distance_between<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: Support + ?Sized,
    B: Support + ?Sized,
{
    match gjk::gjk_raw(a, b)? {
        gjk::RawOutcome::Separated(d) => Ok(d),
        gjk::RawOutcome::Enclosing(simplex) => {
            let depth = epa::expand(a, b, simplex.points())?;
            Ok(if depth <= CONTACT_TOLERANCE { 0.0 } else { -depth })
        }
    }
}

/// A robot together with the convex obstacles of its workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub robot: RobotModel,
    pub obstacles: Vec<ConvexPolygon>,
}

/// Minimum signed distance over all link/obstacle pairs and the pair attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    pub value: f64,
    pub link: usize,
    pub obstacle: usize,
}

impl Environment {
    pub fn new(robot: RobotModel, obstacles: Vec<ConvexPolygon>) -> Self {
        Environment { robot, obstacles }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical (compact JSON) serialization.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("environment serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn distance_to_collision(&self, x: &[f64]) -> Result<DistanceResult> {
        check_dim(self.robot.dof(), x.len())?;
        if self.obstacles.is_empty() {
            return Err(Error::InvalidEnvironment("distance query without obstacles".into()));
        }
        let mut best = DistanceResult { value: f64::INFINITY, link: 0, obstacle: 0 };
        for (i, (pose, len)) in self.robot.link_poses(x)?.iter().zip(self.robot.link_lengths()).enumerate() {
            let body = self.robot.link_corners(pose, *len);
            for (j, obstacle) in self.obstacles.iter().enumerate() {
                let d = signed_distance_between(&body[..], obstacle.vertices())?;
                if d < best.value {
                    best = DistanceResult { value: d, link: i, obstacle: j };
                }
            }
        }
        Ok(best)
    }

    /// Shorthand for `distance_to_collision(x)?.value`.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.distance_to_collision(x)?.value)
    }
}

/// Simulated sensor reading: the true distance plus `Normal(0, eta^2)` noise.
///
/// One standard-normal draw is consumed from `rng` per call, including when
/// `eta == 0`, so call sequences stay aligned across noise levels.
pub fn noisy_distance<R: Rng + ?Sized>(env: &Environment, x: &[f64], eta: f64, rng: &mut R) -> Result<f64> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise level eta = {eta} must be non-negative")));
    }
    let d = env.distance(x)?;
    let z: f64 = rng.sample(StandardNormal);
    Ok(if eta == 0.0 { d } else { d + eta * z })
}

pub(crate) fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}
