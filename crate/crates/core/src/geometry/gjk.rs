//! GJK distance on the Minkowski difference `A - B`.

use super::{cross, epa, ConvexPolygon, Support, CONTACT_TOLERANCE};
use crate::error::{Error, Result};
use crate::Vec2;

pub(crate) const MAX_ITERATIONS: usize = 64;
/// Relative support-progress tolerance; bounds the distance error by `1e-10 * |v|`.
const PROGRESS_TOLERANCE: f64 = 1e-10;
/// Closest points nearer than this to the origin are handed to EPA.
const ORIGIN_TOLERANCE: f64 = 1e-12;

/// Points of the Minkowski difference kept by GJK (one to three).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Simplex {
    points: [Vec2; 3],
    len: usize,
}

impl Simplex {
    /// A simplex from one to three Minkowski-difference points.
    pub fn new(points: &[Vec2]) -> Result<Self> {
        if points.is_empty() || points.len() > 3 {
            return Err(Error::InvalidArgument(format!("simplex needs 1 to 3 points, got {}", points.len())));
        }
        Ok(Simplex::from_slice(points))
    }

    fn single(p: Vec2) -> Self {
        Simplex { points: [p, Vec2::zeros(), Vec2::zeros()], len: 1 }
    }

    fn from_slice(pts: &[Vec2]) -> Self {
        let mut s = Simplex::single(pts[0]);
        s.points[..pts.len()].copy_from_slice(pts);
        s.len = pts.len();
        s
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points[..self.len]
    }

    fn contains(&self, p: &Vec2) -> bool {
        self.points().iter().any(|q| q == p)
    }

    fn push(&mut self, p: Vec2) {
        debug_assert!(self.len < 3);
        self.points[self.len] = p;
        self.len += 1;
    }
}

/// Result of [`gjk_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GjkOutcome {
    /// Euclidean separation (`0.0` for touching contact).
    Separated(f64),
    /// Bodies overlap; the simplex spans a region of `A - B` containing the origin.
    Intersecting(Simplex),
}

pub(crate) enum RawOutcome {
    Separated(f64),
    Enclosing(Simplex),
}

/// Separation distance, or an intersection flag with the terminal simplex.
///
/// Touching bodies are reported as `Separated(0.0)`.
pub fn gjk_distance(a: &ConvexPolygon, b: &ConvexPolygon) -> Result<GjkOutcome> {
    match gjk_raw(a.vertices(), b.vertices())? {
        RawOutcome::Separated(d) => Ok(GjkOutcome::Separated(d)),
        RawOutcome::Enclosing(simplex) => {
            let depth = epa::expand(a.vertices(), b.vertices(), simplex.points())?;
            if depth <= CONTACT_TOLERANCE {
                Ok(GjkOutcome::Separated(0.0))
            } else {
                Ok(GjkOutcome::Intersecting(simplex))
            }
        }
    }
}

#[inline]
pub(crate) fn minkowski_support<A, B>(a: &A, b: &B, dir: &Vec2) -> Vec2
where
    A: Support + ?Sized,
    B: Support + ?Sized,
{
    a.support_point(dir) - b.support_point(&-dir)
}

pub(crate) fn gjk_raw<A, B>(a: &A, b: &B) -> Result<RawOutcome>
where
    A: Support + ?Sized,
    B: Support + ?Sized,
{
    let mut v = a.first_point() - b.first_point();
    let mut simplex = Simplex::single(v);
    for _ in 0..MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv <= ORIGIN_TOLERANCE * ORIGIN_TOLERANCE {
            return Ok(RawOutcome::Enclosing(simplex));
        }
        let w = minkowski_support(a, b, &-v);
        if vv - v.dot(&w) <= PROGRESS_TOLERANCE * vv || simplex.contains(&w) {
            return Ok(RawOutcome::Separated(vv.sqrt()));
        }
        simplex.push(w);
        match closest_on_simplex(&simplex) {
            Some((closest, reduced)) => {
                v = closest;
                simplex = reduced;
            }
            None => return Ok(RawOutcome::Enclosing(simplex)),
        }
    }
    Err(Error::GjkNoConvergence(MAX_ITERATIONS))
}

fn closest_on_segment(p: Vec2, q: Vec2) -> (Vec2, Simplex) {
    let e = q - p;
    let ee = e.norm_squared();
    if ee == 0.0 {
        return (p, Simplex::single(p));
    }
    let t = -p.dot(&e) / ee;
    if t <= 0.0 {
        (p, Simplex::single(p))
    } else if t >= 1.0 {
        (q, Simplex::single(q))
    } else {
        (p + e * t, Simplex::from_slice(&[p, q]))
    }
}

/// Closest point to the origin on the simplex hull together with the minimal
/// supporting sub-simplex, or `None` when a triangle strictly contains the origin.
fn closest_on_simplex(s: &Simplex) -> Option<(Vec2, Simplex)> {
    let pts = s.points();
    match pts.len() {
        1 => Some((pts[0], *s)),
        2 => Some(closest_on_segment(pts[0], pts[1])),
        3 => {
            let (a, b, c) = (pts[0], pts[1], pts[2]);
            let orient = cross(&(b - a), &(c - a));
            if orient != 0.0 {
                let sgn = orient.signum();
                let inside = sgn * cross(&(b - a), &-a) > 0.0
                    && sgn * cross(&(c - b), &-b) > 0.0
                    && sgn * cross(&(a - c), &-c) > 0.0;
                if inside {
                    return None;
                }
            }
            [(a, b), (b, c), (c, a)]
                .into_iter()
                .map(|(p, q)| closest_on_segment(p, q))
                .min_by(|x, y| x.0.norm_squared().total_cmp(&y.0.norm_squared()))
        }
        _ => unreachable!("simplex holds at most three points"),
    }
}
