//! Reference implementations the library is checked against. They favour
//! obviousness over speed and share no code with the crate.
#![allow(dead_code)]

use dtc::Vec2;
use rand::Rng;

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise hull by monotone chain; collinear points dropped.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Signed distance between two convex vertex sets from the explicit
/// Minkowski difference `A - B`: the distance from the origin to its
/// boundary, negated when the origin lies inside.
pub fn minkowski_signed_distance(a: &[Vec2], b: &[Vec2]) -> f64 {
    let diff: Vec<Vec2> = a.iter().flat_map(|p| b.iter().map(move |q| p - q)).collect();
    let hull = convex_hull(&diff);
    let origin = Vec2::zeros();
    let n = hull.len();
    let mut boundary = f64::INFINITY;
    let mut inside = true;
    for i in 0..n {
        let (p, q) = (hull[i], hull[(i + 1) % n]);
        boundary = boundary.min(point_segment_distance(origin, p, q));
        if cross(p, q, origin) < 0.0 {
            inside = false;
        }
    }
    if inside {
        -boundary
    } else {
        boundary
    }
}

/// Hull of 3 to 9 points in a disc; retried until it is a proper polygon.
pub fn random_convex<R: Rng>(rng: &mut R, center: Vec2, radius: f64) -> Vec<Vec2> {
    loop {
        let n = rng.random_range(3..10);
        let pts: Vec<Vec2> = (0..n)
            .map(|_| {
                let r = radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                center + Vec2::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() >= 3 && polygon_area(&hull) > 1e-3 * radius * radius {
            return hull;
        }
    }
}

pub fn polygon_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|i| v[i].x * v[(i + 1) % n].y - v[(i + 1) % n].x * v[i].y).sum::<f64>() / 2.0
}

/// `Phi(t)` from `1/2 + phi(t) * sum t^(2k+1) / (2k+1)!!`. Every term is
/// positive for `t >= 0`, so the sum carries no cancellation; negative
/// arguments use symmetry.
pub fn normal_cdf_series(t: f64) -> f64 {
    if t < 0.0 {
        return 1.0 - normal_cdf_series(-t);
    }
    let mut term = t;
    let mut sum = t;
    let mut k = 1.0;
    while term > 1e-20 * sum {
        term *= t * t / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
    }
    let pdf = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 + pdf * sum
}

/// Planar end-effector position of a serial chain with joint angles `x`.
pub fn end_effector(lengths: &[f64], x: &[f64]) -> (f64, f64) {
    let (mut px, mut py, mut phi) = (0.0, 0.0, 0.0);
    for (l, a) in lengths.iter().zip(x) {
        phi += a;
        px += l * phi.cos();
        py += l * phi.sin();
    }
    (px, py)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
