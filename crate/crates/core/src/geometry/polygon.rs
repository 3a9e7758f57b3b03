use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::cross;
use crate::error::{Error, Result};
use crate::Vec2;

const CONVEXITY_TOLERANCE: f64 = 1e-9;

/// Anything with a support mapping over a finite vertex set.
pub trait Support {
    /// A vertex maximizing `dot(v, dir)`; ties go to the first vertex.
    fn support_point(&self, dir: &Vec2) -> Vec2;
    fn first_point(&self) -> Vec2;
}

impl Support for [Vec2] {
    #[inline]
    fn support_point(&self, dir: &Vec2) -> Vec2 {
        let mut best = self[0];
        let mut best_dot = best.dot(dir);
        for v in &self[1..] {
            let d = v.dot(dir);
            if d > best_dot {
                best_dot = d;
                best = *v;
            }
        }
        best
    }

    fn first_point(&self) -> Vec2 {
        self[0]
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonSpec", into = "PolygonSpec")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolygonSpec {
    vertices: Vec<[f64; 2]>,
}

impl TryFrom<PolygonSpec> for ConvexPolygon {
    type Error = Error;

    fn try_from(spec: PolygonSpec) -> Result<Self> {
        ConvexPolygon::new(spec.vertices.iter().map(|[x, y]| Vec2::new(*x, *y)).collect())
    }
}

impl From<ConvexPolygon> for PolygonSpec {
    fn from(p: ConvexPolygon) -> Self {
        PolygonSpec { vertices: p.vertices.iter().map(|v| [v.x, v.y]).collect() }
    }
}

impl ConvexPolygon {
    /// Validates vertex count, orientation and convexity.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidPolygon(format!("{n} vertices, need at least 3")));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = ConvexPolygon { vertices };
        if poly.signed_area() <= 0.0 {
            return Err(Error::InvalidPolygon("vertices are not counter-clockwise".into()));
        }
        let mut turning = 0.0;
        for i in 0..n {
            let e0 = poly.vertices[(i + 1) % n] - poly.vertices[i];
            let e1 = poly.vertices[(i + 2) % n] - poly.vertices[(i + 1) % n];
            let c = cross(&e0, &e1);
            if c <= -CONVEXITY_TOLERANCE {
                return Err(Error::InvalidPolygon(format!("not convex at vertex {}", (i + 1) % n)));
            }
            turning += c.atan2(e0.dot(&e1));
        }
        // Star polygons pass the local test but wind more than once.
        if (turning - TAU).abs() > 1e-6 {
            return Err(Error::InvalidPolygon("boundary winds more than once".into()));
        }
        Ok(poly)
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<Vec2>) -> Self {
        ConvexPolygon { vertices }
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n).map(|i| cross(&self.vertices[i], &self.vertices[(i + 1) % n])).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len();
        let mut c = Vec2::zeros();
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            c += (p + q) * cross(&p, &q);
        }
        c / (6.0 * self.signed_area())
    }

    pub fn translated(&self, offset: Vec2) -> ConvexPolygon {
        ConvexPolygon { vertices: self.vertices.iter().map(|v| v + offset).collect() }
    }
}

/// Support mapping of a polygon; `dir` must be nonzero.
pub fn support(poly: &ConvexPolygon, dir: Vec2) -> Result<Vec2> {
    if !(dir.x.is_finite() && dir.y.is_finite()) || (dir.x == 0.0 && dir.y == 0.0) {
        return Err(Error::DegenerateDirection);
    }
    Ok(poly.vertices.support_point(&dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::new(vec![
            Vec2::new(-0.5, -0.5),
            Vec2::new(0.5, -0.5),
            Vec2::new(0.5, 0.5),
            Vec2::new(-0.5, 0.5),
        ])
        .unwrap()
    }

    #[test]
    fn support_examples() {
        let sq = unit_square();
        assert_eq!(support(&sq, Vec2::new(1.0, 0.0)).unwrap().x, 0.5);
        assert!(matches!(support(&sq, Vec2::zeros()), Err(Error::DegenerateDirection)));
    }

    #[test]
    fn support_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.random_range(3..10);
            let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            if angles.len() < 3 {
                continue;
            }
            let r = rng.random_range(0.1..3.0);
            let poly = ConvexPolygon::new(angles.iter().map(|a| Vec2::new(r * a.cos(), r * a.sin())).collect()).unwrap();
            let dir = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = support(&poly, dir).unwrap();
            let best = poly.vertices().iter().map(|v| v.dot(&dir)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(s.dot(&dir), best);
        }
    }

    #[test]
    fn validation() {
        let tri = |pts: &[(f64, f64)]| ConvexPolygon::new(pts.iter().map(|(x, y)| Vec2::new(*x, *y)).collect());
        assert!(tri(&[(0.0, 0.0), (1.0, 0.0)]).is_err());
        assert!(tri(&[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)]).is_err());
        assert!(tri(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]).is_ok());
        assert!(tri(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.5), (2.0, 2.0), (0.0, 2.0)]).is_err());
        assert!(tri(&[(0.0, 0.0), (f64::NAN, 0.0), (0.0, 1.0)]).is_err());
        // pentagram: every turn is left but the boundary winds twice
        let star: Vec<(f64, f64)> = (0..5)
            .map(|k| {
                let a = (2 * k % 5) as f64 * TAU / 5.0;
                (a.cos(), a.sin())
            })
            .collect();
        assert!(tri(&star).is_err());
    }

    #[test]
    fn area_and_centroid() {
        let sq = unit_square().translated(Vec2::new(2.0, -1.0));
        assert!((sq.area() - 1.0).abs() < 1e-15);
        assert!((sq.centroid() - Vec2::new(2.0, -1.0)).norm() < 1e-15);
    }
}
