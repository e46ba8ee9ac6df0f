//! Road curvature profiles and centerline self-intersection checks.
//!
//! Curvature is approximated with Menger curvature over sliding triples of
//! consecutive road points: the reciprocal radius of the circle through the
//! three points, signed by the turning direction (counter-clockwise
//! positive).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate point triple: two of the points coincide")]
    DegeneratePoints,
    #[error("curvature profile needs at least 3 points, got {0}")]
    TooFewPoints(usize),
}

/// Signed Menger curvature of the triple, in 1/m.
pub fn menger_curvature(p1: Point, p2: Point, p3: Point) -> Result<f64, GeometryError> {
    if p1 == p2 || p2 == p3 || p1 == p3 {
        return Err(GeometryError::DegeneratePoints);
    }
    // cross = 2 * signed area
    let cross = (p2.x - p1.x) * (p3.y - p1.y) - (p2.y - p1.y) * (p3.x - p1.x);
    if cross == 0.0 {
        return Ok(0.0);
    }
    let sides = p1.distance(p2) * p2.distance(p3) * p1.distance(p3);
    Ok(2.0 * cross / sides)
}

/// Approximated curvature profile of a road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    /// One signed sample per interior road point.
    pub kappas: Vec<f64>,
    pub mean_abs_kappa: f64,
}

impl CurvatureProfile {
    pub fn max_abs_kappa(&self) -> f64 {
        self.kappas.iter().fold(0.0, |acc, k| acc.max(k.abs()))
    }
}

pub fn curvature_profile(points: &[Point]) -> Result<CurvatureProfile, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::TooFewPoints(points.len()));
    }
    let kappas = points
        .windows(3)
        .map(|w| menger_curvature(w[0], w[1], w[2]))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_abs_kappa = kappas.iter().map(|k| k.abs()).sum::<f64>() / kappas.len() as f64;
    Ok(CurvatureProfile { kappas, mean_abs_kappa })
}

/// How road points are prepared before profiling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProfileMode {
    /// Use the stored points as given.
    #[default]
    Raw,
    /// Re-interpolate to uniform arc-length spacing first.
    Resampled { step_m: f64 },
}

impl ProfileMode {
    pub fn profile(self, points: &[Point]) -> Result<CurvatureProfile, GeometryError> {
        match self {
            ProfileMode::Raw => curvature_profile(points),
            ProfileMode::Resampled { step_m } => curvature_profile(&resample_uniform(points, step_m)),
        }
    }
}

/// Linear re-interpolation of a polyline at `step` meter spacing along its
/// arc length. The last original point is always kept.
pub fn resample_uniform(points: &[Point], step: f64) -> Vec<Point> {
    assert!(step > 0.0 && step.is_finite(), "resampling step must be positive");
    if points.len() < 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut carried = 0.0; // arc length since the last emitted sample
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.distance(b);
        let mut s = step - carried;
        while s < len {
            let t = s / len;
            out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            s += step;
        }
        carried = len - (s - step);
    }
    let last = *points.last().unwrap();
    // drop a sample that landed (numerically) on the final point
    if out.last().is_some_and(|p| p.distance(last) < step * 1e-9) {
        out.pop();
    }
    out.push(last);
    out
}

/// Total centerline length in meters.
pub fn road_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Whether the road overlaps itself for a road of the given width.
///
/// Two centerline locations conflict when they are closer than `road_width`
/// in the plane while being more than `road_width * PI / 2` apart along the
/// centerline. The arc-length gap excludes neighbouring locations on the same
/// bend: on any circular arc whose radius is at least half the road width
/// the chord between two locations separated by that gap is never shorter
/// than the width, so only genuine overlaps (crossings, hairpins folding
/// back onto themselves, kinks sharper than the road can turn) are reported.
pub fn is_self_intersecting(points: &[Point], road_width: f64) -> bool {
    if points.len() < 2 {
        return false;
    }
    let min_gap = road_width * std::f64::consts::FRAC_PI_2;
    let mut starts = Vec::with_capacity(points.len());
    let mut s = 0.0;
    for w in points.windows(2) {
        starts.push(s);
        s += w[0].distance(w[1]);
    }
    let n = points.len() - 1;
    for i in 0..n {
        let (a0, a1) = (points[i], points[i + 1]);
        let a_len = starts.get(i + 1).copied().unwrap_or(s) - starts[i];
        let (ax_lo, ax_hi) = (a0.x.min(a1.x), a0.x.max(a1.x));
        let (ay_lo, ay_hi) = (a0.y.min(a1.y), a0.y.max(a1.y));
        for j in i..n {
            let (b0, b1) = (points[j], points[j + 1]);
            let b_len = starts.get(j + 1).copied().unwrap_or(s) - starts[j];
            // largest possible arc gap between the two segments
            if starts[j] + b_len - starts[i] <= min_gap {
                continue;
            }
            if b0.x.min(b1.x) - ax_hi >= road_width
                || ax_lo - b0.x.max(b1.x) >= road_width
                || b0.y.min(b1.y) - ay_hi >= road_width
                || ay_lo - b0.y.max(b1.y) >= road_width
            {
                continue;
            }
            let seg_a = Segment { p: a0, q: a1, s0: starts[i], len: a_len };
            let seg_b = Segment { p: b0, q: b1, s0: starts[j], len: b_len };
            if gap_constrained_distance(&seg_a, &seg_b, min_gap) < road_width {
                return true;
            }
        }
    }
    false
}

struct Segment {
    p: Point,
    q: Point,
    /// arc length at `p`
    s0: f64,
    len: f64,
}

/// Minimum planar distance between a point on `a` and a point on `b` whose
/// arc-length separation exceeds `min_gap`. `b` must not start before `a`.
///
/// Minimises the convex quadratic |a(t) - b(u)|^2 over the unit square
/// intersected with the half-plane `(s_b(u) - s_a(t)) >= min_gap`. Either the
/// unconstrained minimum is feasible, or the minimum lies on the constraint
/// line.
fn gap_constrained_distance(a: &Segment, b: &Segment, min_gap: f64) -> f64 {
    let gap = |t: f64, u: f64| (b.s0 + u * b.len) - (a.s0 + t * a.len);
    let dist = |t: f64, u: f64| {
        let pa = lerp(a.p, a.q, t);
        let pb = lerp(b.p, b.q, u);
        pa.distance(pb)
    };

    let (t, u) = closest_params(a.p, a.q, b.p, b.q);
    if gap(t, u) >= min_gap {
        return dist(t, u);
    }

    // Constraint line: b.s0 + u*b.len - a.s0 - t*a.len = min_gap.
    let c = min_gap - (b.s0 - a.s0);
    if a.len == 0.0 || b.len == 0.0 {
        return f64::INFINITY;
    }
    // u = (c + t*a.len) / b.len, with t, u in [0, 1]
    let t_lo = ((-c) / a.len).max(0.0);
    let t_hi = ((b.len - c) / a.len).min(1.0);
    if t_lo > t_hi {
        return f64::INFINITY;
    }
    let u_of = |t: f64| ((c + t * a.len) / b.len).clamp(0.0, 1.0);
    // d(t) = a(t) - b(u(t)) is affine in t; minimise |d|^2 on [t_lo, t_hi].
    let d0 = sub(lerp(a.p, a.q, t_lo), lerp(b.p, b.q, u_of(t_lo)));
    let d1 = sub(lerp(a.p, a.q, t_hi), lerp(b.p, b.q, u_of(t_hi)));
    let dd = (d1.0 - d0.0, d1.1 - d0.1);
    let denom = dd.0 * dd.0 + dd.1 * dd.1;
    let w = if denom > 0.0 { (-(d0.0 * dd.0 + d0.1 * dd.1) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let t_star = t_lo + w * (t_hi - t_lo);
    dist(t_star, u_of(t_star))
}

fn lerp(p: Point, q: Point, t: f64) -> Point {
    Point::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

fn sub(a: Point, b: Point) -> (f64, f64) {
    (a.x - b.x, a.y - b.y)
}

/// Parameters (t, u) of the closest points between segments p0p1 and q0q1.
fn closest_params(p0: Point, p1: Point, q0: Point, q1: Point) -> (f64, f64) {
    let d1 = sub(p1, p0);
    let d2 = sub(q1, q0);
    let r = sub(p0, q0);
    let a = d1.0 * d1.0 + d1.1 * d1.1;
    let e = d2.0 * d2.0 + d2.1 * d2.1;
    let f = d2.0 * r.0 + d2.1 * r.1;
    if a == 0.0 && e == 0.0 {
        return (0.0, 0.0);
    }
    if a == 0.0 {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.0 * r.0 + d1.1 * r.1;
    if e == 0.0 {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.0 * d2.0 + d1.1 * d2.1;
    let denom = a * e - b * b;
    let mut t = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut u = (b * t + f) / e;
    if u < 0.0 {
        u = 0.0;
        t = (-c / a).clamp(0.0, 1.0);
    } else if u > 1.0 {
        u = 1.0;
        t = ((b - c) / a).clamp(0.0, 1.0);
    }
    (t, u)
}
