//! Trajectory types, kinematics derivation and splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2};

/// Tracking gap that ends a trajectory segment when none is configured.
pub const DEFAULT_MAX_GAP_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TrajectoryPoint {
    pub const fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    pub fn pos(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite()
    }
}

/// A timestamped 2-D track with per-point speed and heading.
///
/// Speeds and headings are forward differences: point `i` gets the displacement towards point
/// `i + 1`, the last point repeats the penultimate step, and a zero-length step keeps the
/// previous heading (0 if it is the first step).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    points: Vec<TrajectoryPoint>,
    speeds: Vec<f64>,
    headings: Vec<f64>,
}

impl Trajectory {
    /// Validates the points (finite, strictly increasing time) and derives kinematics.
    pub fn new(id: impl Into<String>, points: Vec<TrajectoryPoint>) -> Result<Self> {
        let id = id.into();
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "trajectory {id}: non-finite point at t={}",
                p.t
            )));
        }
        let (speeds, headings) = kinematics(&id, &points)?;
        Ok(Self {
            id,
            points,
            speeds,
            headings,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn headings(&self) -> &[f64] {
        &self.headings
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(TrajectoryPoint::pos).collect()
    }

    pub fn start_time(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.t)
    }

    pub fn end_time(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.t)
    }

    /// Cumulative arc length at every point.
    pub fn arc_lengths(&self) -> Vec<f64> {
        crate::geometry::cumulative_lengths(&self.positions())
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].pos().dist(w[1].pos())).sum()
    }

    /// Sub-trajectory over the index range, with kinematics re-derived.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Trajectory {
        let points = self.points[range].to_vec();
        let (speeds, headings) = kinematics(&self.id, &points).expect("slice of a valid trajectory is valid");
        Trajectory {
            id: self.id.clone(),
            points,
            speeds,
            headings,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Position at time `t`, linearly interpolated; `None` outside the time range.
    pub fn position_at(&self, t: f64) -> Option<Point2> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        if t < first.t || t > last.t {
            return None;
        }
        let i = self.points.partition_point(|p| p.t <= t);
        if i == 0 {
            return Some(first.pos());
        }
        if i >= self.points.len() {
            return Some(last.pos());
        }
        let (a, b) = (self.points[i - 1], self.points[i]);
        let u = (t - a.t) / (b.t - a.t);
        Some(a.pos().lerp(b.pos(), u))
    }

    /// Position at time `t`, holding the first/last position outside the time range.
    pub fn position_at_clamped(&self, t: f64) -> Point2 {
        match self.position_at(t) {
            Some(p) => p,
            None if t < self.start_time() => self.points[0].pos(),
            None => self.points[self.points.len() - 1].pos(),
        }
    }

    /// Mean derived speed over points with `t >= end_time - window_s`.
    pub fn mean_speed_over_last(&self, window_s: f64) -> f64 {
        let t0 = self.end_time() - window_s;
        let (sum, n) = self
            .points
            .iter()
            .zip(&self.speeds)
            .filter(|(p, _)| p.t >= t0)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        if n == 0 {
            self.speeds.last().copied().unwrap_or(0.0)
        } else {
            sum / n as f64
        }
    }

    pub fn mean_speed(&self) -> f64 {
        if self.speeds.is_empty() {
            0.0
        } else {
            self.speeds.iter().sum::<f64>() / self.speeds.len() as f64
        }
    }
}

/// Timestamped-point constructor helper for tests and fixtures.
pub fn points_from_tuples(pts: &[(f64, f64, f64)]) -> Vec<TrajectoryPoint> {
    pts.iter().map(|&(t, x, y)| TrajectoryPoint::new(t, x, y)).collect()
}

/// Kinematic state of a vehicle at a single instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub accel: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64, yaw_rate: f64, accel: f64) -> Result<Self> {
        let s = Self {
            x,
            y,
            heading,
            speed,
            yaw_rate,
            accel,
        };
        let finite = [x, y, heading, speed, yaw_rate, accel].iter().all(|v| v.is_finite());
        if !finite || speed < 0.0 {
            return Err(Error::Validation(format!("invalid vehicle state {s:?}")));
        }
        Ok(s)
    }

    pub fn pos(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

fn kinematics(id: &str, points: &[TrajectoryPoint]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = points.len();
    let mut speeds = Vec::with_capacity(n);
    let mut headings = Vec::with_capacity(n);
    let mut last_heading = 0.0;
    for w in points.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Validation(format!(
                "trajectory {id}: time not strictly increasing at t={}",
                w[1].t
            )));
        }
        let d = w[1].pos() - w[0].pos();
        let dist = d.norm();
        if dist > 0.0 {
            last_heading = wrap_angle(d.heading());
        }
        speeds.push(dist / dt);
        headings.push(last_heading);
    }
    if n >= 2 {
        speeds.push(speeds[n - 2]);
        headings.push(headings[n - 2]);
    } else if n == 1 {
        speeds.push(0.0);
        headings.push(0.0);
    }
    Ok((speeds, headings))
}

/// Recomputes speeds and headings from the raw points.
pub fn derive_kinematics(traj: &Trajectory) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(Error::Validation(format!(
            "trajectory {} needs at least 2 points, has {}",
            traj.id(),
            traj.len()
        )));
    }
    Trajectory::new(traj.id(), traj.points().to_vec())
}

/// Splits at temporal gaps larger than `max_gap_s` and drops pieces shorter than
/// `min_length_m`. Pieces after the first get an `#k` suffix on their id.
pub fn split_and_trim(traj: &Trajectory, min_length_m: f64, max_gap_s: f64) -> Vec<Trajectory> {
    let pts = traj.points();
    let mut cuts = vec![0];
    for i in 1..pts.len() {
        if pts[i].t - pts[i - 1].t > max_gap_s {
            cuts.push(i);
        }
    }
    cuts.push(pts.len());

    let mut out = Vec::new();
    for (k, w) in cuts.windows(2).enumerate() {
        if w[1] - w[0] < 2 {
            continue;
        }
        let piece = traj.slice(w[0]..w[1]);
        if piece.length() < min_length_m {
            continue;
        }
        let piece = if k == 0 {
            piece
        } else {
            let id = format!("{}#{k}", traj.id());
            piece.with_id(id)
        };
        out.push(piece);
    }
    out
}
