//! Planar geometry helpers shared by the raster, graph and prediction code.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn from_heading(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn lerp(self, other: Point2, u: f64) -> Point2 {
        self + (other - self) * u
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Closest point on segment `a`-`b` to `p`, returned with its parameter in [0, 1].
pub fn project_on_segment(p: Point2, a: Point2, b: Point2) -> (Point2, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 <= f64::EPSILON {
        return (a, 0.0);
    }
    let u = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (a + ab * u, u)
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    project_on_segment(p, a, b).0.dist(p)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub distance: f64,
    pub point: Point2,
    /// Index of the segment (`i` means the segment from vertex `i` to `i + 1`).
    pub segment: usize,
    /// Arc length from the polyline start to the projected point.
    pub arc_length: f64,
}

pub fn project_on_polyline(p: Point2, line: &[Point2]) -> Option<PolylineProjection> {
    match line.len() {
        0 => None,
        1 => Some(PolylineProjection {
            distance: p.dist(line[0]),
            point: line[0],
            segment: 0,
            arc_length: 0.0,
        }),
        _ => {
            let mut best: Option<PolylineProjection> = None;
            let mut walked = 0.0;
            for (i, w) in line.windows(2).enumerate() {
                let (q, u) = project_on_segment(p, w[0], w[1]);
                let seg_len = w[0].dist(w[1]);
                let d = q.dist(p);
                if best.is_none_or(|b| d < b.distance) {
                    best = Some(PolylineProjection {
                        distance: d,
                        point: q,
                        segment: i,
                        arc_length: walked + u * seg_len,
                    });
                }
                walked += seg_len;
            }
            best
        }
    }
}

pub fn polyline_length(line: &[Point2]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Cumulative arc length at each vertex, starting at 0.
pub fn cumulative_lengths(line: &[Point2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(line.len());
    let mut acc = 0.0;
    for (i, p) in line.iter().enumerate() {
        if i > 0 {
            acc += line[i - 1].dist(*p);
        }
        out.push(acc);
    }
    out
}

/// Point at arc length `s` along the polyline, clamped to its ends.
pub fn point_at_arc_length(line: &[Point2], cumulative: &[f64], s: f64) -> Point2 {
    debug_assert_eq!(line.len(), cumulative.len());
    if line.is_empty() {
        return Point2::default();
    }
    if s <= 0.0 {
        return line[0];
    }
    let total = *cumulative.last().unwrap();
    if s >= total {
        return *line.last().unwrap();
    }
    let i = cumulative.partition_point(|&c| c <= s).saturating_sub(1);
    let span = cumulative[i + 1] - cumulative[i];
    if span <= 0.0 {
        return line[i];
    }
    line[i].lerp(line[i + 1], (s - cumulative[i]) / span)
}

/// Ramer-Douglas-Peucker simplification. Endpoints are always kept and every removed vertex
/// lies within `tolerance` of the simplified polyline.
pub fn simplify_polyline(line: &[Point2], tolerance: f64) -> Vec<Point2> {
    if line.len() <= 2 {
        return line.to_vec();
    }
    let mut keep = vec![false; line.len()];
    keep[0] = true;
    keep[line.len() - 1] = true;
    let mut stack = vec![(0usize, line.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let mut worst = (lo, -1.0);
        for i in lo + 1..hi {
            let d = point_segment_distance(line[i], line[lo], line[hi]);
            if d > worst.1 {
                worst = (i, d);
            }
        }
        if worst.1 > tolerance {
            keep[worst.0] = true;
            stack.push((lo, worst.0));
            stack.push((worst.0, hi));
        }
    }
    line.iter().zip(keep).filter_map(|(p, k)| k.then_some(*p)).collect()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut a = theta % two_pi;
    if a <= -std::f64::consts::PI {
        a += two_pi;
    } else if a > std::f64::consts::PI {
        a -= two_pi;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_onto_polyline_reports_arc_length() {
        let line = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(10.0, 10.0)];
        let proj = project_on_polyline(Point2::new(12.0, 4.0), &line).unwrap();
        assert_eq!(proj.segment, 1);
        assert!((proj.distance - 2.0).abs() < 1e-12);
        assert!((proj.arc_length - 14.0).abs() < 1e-12);
    }

    #[test]
    fn simplify_keeps_endpoints_of_collinear_chain() {
        let line: Vec<_> = (0..20).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        let s = simplify_polyline(&line, 0.01);
        assert_eq!(s, vec![line[0], line[19]]);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn arc_length_lookup_interpolates() {
        let line = [Point2::new(0.0, 0.0), Point2::new(4.0, 0.0), Point2::new(4.0, 4.0)];
        let cum = cumulative_lengths(&line);
        assert_eq!(point_at_arc_length(&line, &cum, 6.0), Point2::new(4.0, 2.0));
        assert_eq!(point_at_arc_length(&line, &cum, 100.0), Point2::new(4.0, 4.0));
    }
}
