//! Learned distance-to-collision estimators for planar serial manipulators.
//!
//! The ground-truth signed distance comes from GJK/EPA on convex link
//! rectangles and convex obstacles. Kernel regressors (Gaussian-process and
//! Nadaraya-Watson) are fitted to noisy samples of it, optionally combined
//! with the sensor in a confidence-gated hybrid, and used as collision
//! constraints inside a trajectory optimizer.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod hybrid;
pub mod kernels;
pub mod kinematics;
pub mod optimize;
pub mod regression;

pub use error::{Error, Result};
pub use geometry::{ConvexPolygon, Environment};
pub use kernels::{KernelKind, KernelSpec};
pub use kinematics::RobotModel;

pub type Vec2 = nalgebra::Vector2<f64>;
