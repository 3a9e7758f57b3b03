//! Expanding polytope penetration depth on the 2-D Minkowski difference.
//!
//! The polytope starts as the hull of the GJK simplex plus eight directional
//! supports, so it is full-dimensional even when GJK stopped on a segment or
//! a point through the origin. Each round queries the support along the
//! outward normal of the edge closest to the origin and re-hulls.

use std::f64::consts::FRAC_1_SQRT_2;

use super::gjk::{minkowski_support, Simplex};
use super::{cross, ConvexPolygon, Support};
use crate::error::{Error, Result};
use crate::Vec2;

const MAX_ITERATIONS: usize = 128;
const PROGRESS_TOLERANCE: f64 = 1e-12;
/// How far outside the polytope the origin may sit before the bodies count as disjoint.
const INSIDE_TOLERANCE: f64 = 1e-10;

/// Minimum translation distance separating two intersecting polygons.
pub fn epa_penetration(a: &ConvexPolygon, b: &ConvexPolygon, simplex: &Simplex) -> Result<f64> {
    expand(a.vertices(), b.vertices(), simplex.points())
}

pub(crate) fn expand<A, B>(a: &A, b: &B, seed: &[Vec2]) -> Result<f64>
where
    A: Support + ?Sized,
    B: Support + ?Sized,
{
    const D: f64 = FRAC_1_SQRT_2;
    let dirs = [(1.0, 0.0), (D, D), (0.0, 1.0), (-D, D), (-1.0, 0.0), (-D, -D), (0.0, -1.0), (D, -D)];
    let mut points: Vec<Vec2> = seed.to_vec();
    points.extend(dirs.iter().map(|(x, y)| minkowski_support(a, b, &Vec2::new(*x, *y))));

    let mut hull = convex_hull(&points);
    if hull.len() < 3 {
        return Err(Error::InvalidPolygon("degenerate Minkowski difference".into()));
    }
    if closest_edge(&hull).1 < -INSIDE_TOLERANCE {
        return Err(Error::NotIntersecting);
    }
    for _ in 0..MAX_ITERATIONS {
        let (normal, dist) = closest_edge(&hull);
        let s = minkowski_support(a, b, &normal);
        if s.dot(&normal) - dist <= PROGRESS_TOLERANCE || points.contains(&s) {
            return Ok(dist.max(0.0));
        }
        points.push(s);
        hull = convex_hull(&points);
    }
    Err(Error::EpaNoConvergence(MAX_ITERATIONS))
}

/// Outward unit normal and origin distance of the hull edge nearest the origin.
/// The distance is negative when the origin lies outside that edge.
fn closest_edge(hull: &[Vec2]) -> (Vec2, f64) {
    let n = hull.len();
    let mut best = (Vec2::zeros(), f64::INFINITY);
    for i in 0..n {
        let e = hull[(i + 1) % n] - hull[i];
        let normal = Vec2::new(e.y, -e.x).normalize();
        let d = normal.dot(&hull[i]);
        if d < best.1 {
            best = (normal, d);
        }
    }
    best
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub(crate) fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    let extend = |hull: &mut Vec<Vec2>, start: usize, p: Vec2| {
        while hull.len() >= start + 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(&(a - o), &(p - o)) > 0.0 {
                break;
            }
            hull.pop();
        }
        hull.push(p);
    };
    for p in &pts {
        extend(&mut hull, 0, *p);
    }
    hull.pop();
    let start = hull.len();
    for p in pts.iter().rev() {
        extend(&mut hull, start, *p);
    }
    hull.pop();
    hull
}
