use serde::{Deserialize, Serialize};

use crate::geometry::{cumulative_lengths, Point2};
use crate::model::TrajectoryPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    /// Arc-length spacing used to resample members.
    pub resample_m: f64,
    /// Distance between sweep lines along the average direction.
    pub step_m: f64,
    /// Members that must cross a sweep line for it to emit a point (capped at the member
    /// count).
    pub min_lns: usize,
    /// Lower bound on the speed used to integrate prototype timestamps.
    pub min_speed_mps: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            resample_m: 0.25,
            step_m: 0.5,
            min_lns: 3,
            min_speed_mps: 0.1,
        }
    }
}

/// Positions with a speed per point; one member of a prototype group.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberPath {
    pub points: Vec<Point2>,
    pub speeds: Vec<f64>,
}

/// Representative trajectory of a group, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub points: Vec<TrajectoryPoint>,
    pub members: usize,
    /// True when built from an edge polyline because no member was usable.
    pub fallback: bool,
}

impl Prototype {
    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(|p| p.pos()).collect()
    }

    /// Forward-difference speed at every point; the last point repeats the previous step.
    pub fn speeds(&self) -> Vec<f64> {
        let p = &self.points;
        let mut v: Vec<f64> = p
            .windows(2)
            .map(|w| w[0].pos().dist(w[1].pos()) / (w[1].t - w[0].t))
            .collect();
        if let Some(&last) = v.last() {
            v.push(last);
        }
        v
    }

    /// Edge geometry driven at constant speed.
    pub fn from_polyline(line: &[Point2], speed_mps: f64, resample_m: f64) -> Option<Self> {
        let speed = speed_mps.max(0.1);
        let member = MemberPath {
            points: line.to_vec(),
            speeds: vec![speed; line.len()],
        };
        let r = resample(&member, resample_m)?;
        let mut t = 0.0;
        let mut points = Vec::with_capacity(r.points.len());
        for (k, p) in r.points.iter().enumerate() {
            if k > 0 {
                t += p.dist(r.points[k - 1]) / speed;
            }
            points.push(TrajectoryPoint::new(t, p.x, p.y));
        }
        Some(Self {
            points,
            members: 0,
            fallback: true,
        })
    }
}

/// Resamples a member at uniform arc spacing, keeping both endpoints. Speeds are interpolated
/// along the arc. `None` for zero-length input.
pub fn resample(m: &MemberPath, spacing: f64) -> Option<MemberPath> {
    if m.points.len() < 2 {
        return None;
    }
    let cum = cumulative_lengths(&m.points);
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return None;
    }
    let n = (total / spacing).floor() as usize;
    let mut points = Vec::with_capacity(n + 2);
    let mut speeds = Vec::with_capacity(n + 2);
    let mut seg = 0;
    let sample = |s: f64, seg: &mut usize| {
        while *seg + 2 < cum.len() && cum[*seg + 1] < s {
            *seg += 1;
        }
        let len = cum[*seg + 1] - cum[*seg];
        let u = if len > 0.0 {
            ((s - cum[*seg]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (
            m.points[*seg].lerp(m.points[*seg + 1], u),
            m.speeds[*seg] + (m.speeds[*seg + 1] - m.speeds[*seg]) * u,
        )
    };
    for k in 0..=n {
        let (p, v) = sample(k as f64 * spacing, &mut seg);
        points.push(p);
        speeds.push(v);
    }
    if total - n as f64 * spacing > 1e-9 {
        points.push(*m.points.last().unwrap());
        speeds.push(*m.speeds.last().unwrap());
    }
    Some(MemberPath { points, speeds })
}

/// Representative-trajectory sweep.
///
/// Members are resampled, then a line perpendicular to their average direction sweeps along
/// that direction. At every step where enough members cross the line, the mean crossing
/// position and mean member speed form one prototype point. Timestamps integrate arc length over
/// the mean speed of consecutive points. Returns `None` when fewer than two points come out.
pub fn extract_prototype(members: &[MemberPath], params: &SweepParams) -> Option<Prototype> {
    let resampled: Vec<MemberPath> = members.iter().filter_map(|m| resample(m, params.resample_m)).collect();
    if resampled.is_empty() {
        return None;
    }
    let mut dir = resampled.iter().fold(Point2::default(), |acc, m| {
        let d = *m.points.last().unwrap() - m.points[0];
        let n = d.norm();
        if n > 0.0 {
            acc + d * (1.0 / n)
        } else {
            acc
        }
    });
    if dir.norm() < 1e-9 {
        dir = resampled[0].points[1] - resampled[0].points[0];
    }
    let axis = dir * (1.0 / dir.norm());
    let normal = Point2::new(-axis.y, axis.x);
    let local: Vec<Vec<(f64, f64)>> = resampled
        .iter()
        .map(|m| m.points.iter().map(|p| (p.dot(axis), p.dot(normal))).collect())
        .collect();
    let lo = local.iter().flatten().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = local.iter().flatten().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let need = params.min_lns.clamp(1, resampled.len());
    let steps = ((hi - lo) / params.step_m).floor() as usize;
    let mut xs: Vec<f64> = (0..=steps).map(|k| lo + k as f64 * params.step_m).collect();
    if hi - xs[xs.len() - 1] > 1e-9 {
        xs.push(hi);
    }

    let mut out_pts: Vec<Point2> = Vec::new();
    let mut out_v: Vec<f64> = Vec::new();
    for &x in &xs {
        let mut sum_y = 0.0;
        let mut sum_v = 0.0;
        let mut count = 0usize;
        for (m, loc) in resampled.iter().zip(&local) {
            if let Some((y, v)) = crossing(loc, &m.speeds, x) {
                sum_y += y;
                sum_v += v;
                count += 1;
            }
        }
        if count >= need {
            let y = sum_y / count as f64;
            out_pts.push(axis * x + normal * y);
            out_v.push(sum_v / count as f64);
        }
    }
    if out_pts.len() < 2 {
        return None;
    }
    let mut t = 0.0;
    let mut points = Vec::with_capacity(out_pts.len());
    for k in 0..out_pts.len() {
        if k > 0 {
            let ds = out_pts[k].dist(out_pts[k - 1]);
            let v = (0.5 * (out_v[k] + out_v[k - 1])).max(params.min_speed_mps);
            t += ds / v;
        }
        points.push(TrajectoryPoint::new(t, out_pts[k].x, out_pts[k].y));
    }
    Some(Prototype {
        points,
        members: resampled.len(),
        fallback: false,
    })
}

/// First crossing of the member with the sweep line at `x` (local coordinates).
fn crossing(loc: &[(f64, f64)], speeds: &[f64], x: f64) -> Option<(f64, f64)> {
    for k in 0..loc.len().saturating_sub(1) {
        let (a, b) = (loc[k], loc[k + 1]);
        let (x0, x1) = (a.0.min(b.0), a.0.max(b.0));
        if x < x0 || x > x1 {
            continue;
        }
        if x1 - x0 <= 1e-12 {
            return Some((a.1, speeds[k]));
        }
        let u = (x - a.0) / (b.0 - a.0);
        return Some((a.1 + (b.1 - a.1) * u, speeds[k] + (speeds[k + 1] - speeds[k]) * u));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_on_polyline;

    fn line_member(y: f64, len: f64, v: f64) -> MemberPath {
        let n = 21;
        MemberPath {
            points: (0..n)
                .map(|k| Point2::new(len * k as f64 / (n - 1) as f64, y))
                .collect(),
            speeds: vec![v; n],
        }
    }

    #[test]
    fn single_member_reproduces_itself() {
        let m = line_member(0.3, 10.0, 8.0);
        let p = extract_prototype(std::slice::from_ref(&m), &SweepParams::default()).unwrap();
        for q in p.positions() {
            assert!(project_on_polyline(q, &m.points).unwrap().distance < 1e-9);
        }
        assert!((p.points.last().unwrap().t - 10.0 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn parallel_members_give_centerline() {
        let ms = [line_member(1.0, 20.0, 5.0), line_member(-1.0, 20.0, 7.0)];
        let params = SweepParams {
            min_lns: 2,
            ..Default::default()
        };
        let p = extract_prototype(&ms, &params).unwrap();
        assert!(p.positions().iter().all(|q| q.y.abs() <= 0.05));
        assert!(p.speeds().iter().all(|&v| (v - 6.0).abs() < 1e-9));
    }

    #[test]
    fn resample_keeps_endpoints_and_spacing() {
        let m = line_member(0.0, 3.1, 1.0);
        let r = resample(&m, 0.25).unwrap();
        assert_eq!(r.points[0], m.points[0]);
        assert_eq!(*r.points.last().unwrap(), *m.points.last().unwrap());
        for w in r.points.windows(2).take(r.points.len() - 2) {
            assert!((w[0].dist(w[1]) - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn polyline_fallback_is_timed_at_constant_speed() {
        let line = [Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let p = Prototype::from_polyline(&line, 5.0, 0.25).unwrap();
        assert!(p.fallback);
        assert!((p.points.last().unwrap().t - 2.0).abs() < 1e-9);
    }
}
