//! Seeded synthetic intersection traffic.
//!
//! Arms radiate from the origin at the configured headings. Right-hand traffic: each arm has
//! an inbound lane and an outbound lane offset by `lane_offset_m` to the right of travel.
//! Turns are line-arc-line fillets between the stop lines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, point_at_arc_length, Point2};
use crate::model::{Trajectory, TrajectoryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManeuverKind {
    Straight,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManeuverWeights {
    pub straight: f64,
    pub left: f64,
    pub right: f64,
}

impl Default for ManeuverWeights {
    fn default() -> Self {
        Self {
            straight: 0.5,
            left: 0.25,
            right: 0.25,
        }
    }
}

impl ManeuverWeights {
    fn weight(&self, kind: ManeuverKind) -> f64 {
        match kind {
            ManeuverKind::Straight => self.straight,
            ManeuverKind::Left => self.left,
            ManeuverKind::Right => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub count: usize,
    pub seed: u64,
    pub arm_headings_deg: Vec<f64>,
    pub arm_length_m: f64,
    pub stop_line_m: f64,
    pub lane_offset_m: f64,
    /// Upper bound on fillet radii; the largest fillet that fits between the stop lines is
    /// used otherwise.
    pub max_turn_radius_m: f64,
    pub demand: ManeuverWeights,
    pub cruise_speed_mps: f64,
    pub cruise_speed_sigma: f64,
    pub right_turn_speed_mps: f64,
    pub left_turn_speed_mps: f64,
    pub turn_speed_sigma: f64,
    /// Share of straight-through drivers who slow down as if they were turning.
    pub cautious_fraction: f64,
    pub cautious_speed_mps: f64,
    pub decel_mps2: f64,
    pub accel_mps2: f64,
    /// Per-vehicle constant offset from the lane centerline.
    pub lateral_sigma_m: f64,
    /// Independent per-sample position noise.
    pub noise_sigma_m: f64,
    pub sample_hz: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            count: 400,
            seed: 7,
            arm_headings_deg: vec![0.0, 90.0, 180.0, 270.0],
            arm_length_m: 60.0,
            stop_line_m: 15.0,
            lane_offset_m: 1.75,
            max_turn_radius_m: 20.0,
            demand: ManeuverWeights::default(),
            cruise_speed_mps: 12.0,
            cruise_speed_sigma: 1.0,
            right_turn_speed_mps: 5.0,
            left_turn_speed_mps: 6.5,
            turn_speed_sigma: 0.5,
            cautious_fraction: 0.1,
            cautious_speed_mps: 8.0,
            decel_mps2: 2.0,
            accel_mps2: 1.5,
            lateral_sigma_m: 0.25,
            noise_sigma_m: 0.1,
            sample_hz: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        let w = &self.demand;
        if [w.straight, w.left, w.right]
            .iter()
            .any(|&x| !(x >= 0.0 && x.is_finite()))
        {
            return bad("demand weights must be finite and >= 0");
        }
        if w.straight + w.left + w.right <= 0.0 {
            return bad("demand weights must not all be zero");
        }
        if self.arm_headings_deg.len() < 2 {
            return bad("at least two arms are required");
        }
        if !(self.arm_length_m > self.stop_line_m && self.stop_line_m > self.lane_offset_m) {
            return bad("need arm_length_m > stop_line_m > lane_offset_m");
        }
        if self.lane_offset_m <= 0.0 || self.max_turn_radius_m <= 0.0 {
            return bad("lane offset and turn radius must be > 0");
        }
        let speeds = [
            self.cruise_speed_mps,
            self.right_turn_speed_mps,
            self.left_turn_speed_mps,
            self.cautious_speed_mps,
        ];
        if speeds.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("speeds must be > 0");
        }
        if !(self.decel_mps2 > 0.0 && self.accel_mps2 > 0.0 && self.sample_hz > 0.0) {
            return bad("decel, accel and sample rate must be > 0");
        }
        if !(0.0..=1.0).contains(&self.cautious_fraction) {
            return bad("cautious_fraction must lie in [0, 1]");
        }
        if [
            self.cruise_speed_sigma,
            self.turn_speed_sigma,
            self.lateral_sigma_m,
            self.noise_sigma_m,
        ]
        .iter()
        .any(|&s| !(s >= 0.0 && s.is_finite()))
        {
            return bad("sigmas must be finite and >= 0");
        }
        if self.available_maneuvers().is_empty() {
            return bad("no arm pair yields a maneuver with positive demand");
        }
        Ok(())
    }

    fn arm_dir(&self, arm: usize) -> Point2 {
        Point2::from_heading(self.arm_headings_deg[arm].to_radians())
    }

    /// All (from arm, to arm, kind) triples with positive demand weight.
    pub fn available_maneuvers(&self) -> Vec<Maneuver> {
        let n = self.arm_headings_deg.len();
        let mut out = Vec::new();
        for from in 0..n {
            for to in 0..n {
                if from == to {
                    continue;
                }
                let kind = classify_turn(-self.arm_dir(from), self.arm_dir(to));
                if self.demand.weight(kind) > 0.0 {
                    out.push(Maneuver { from, to, kind });
                }
            }
        }
        out
    }

    /// Lane centerline of a maneuver, densely sampled.
    pub fn reference_path(&self, from: usize, to: usize) -> ReferencePath {
        let d1 = -self.arm_dir(from);
        let d2 = self.arm_dir(to);
        let r1 = right_normal(d1);
        let r2 = right_normal(d2);
        let start = self.arm_dir(from) * self.arm_length_m + r1 * self.lane_offset_m;
        let p1 = self.arm_dir(from) * self.stop_line_m + r1 * self.lane_offset_m;
        let p2 = self.arm_dir(to) * self.stop_line_m + r2 * self.lane_offset_m;
        let end = self.arm_dir(to) * self.arm_length_m + r2 * self.lane_offset_m;
        const STEP: f64 = 0.05;
        let mut pts = Vec::new();
        push_line(&mut pts, start, p1, STEP);
        let (s_turn_start, s_turn_end);
        let denom = d1.cross(d2);
        if denom.abs() < 1e-9 {
            s_turn_start = polyline_len(&pts);
            push_line(&mut pts, p1, p2, STEP);
            s_turn_end = polyline_len(&pts);
        } else {
            // Intersection X of the two lane lines.
            let u = (p2 - p1).cross(d2) / denom;
            let x = p1 + d1 * u;
            let delta = d1.cross(d2).atan2(d1.dot(d2));
            let half_tan = (delta.abs() / 2.0).tan();
            let room = x.dist(p1).min(x.dist(p2));
            let radius = self.max_turn_radius_m.min(room / half_tan);
            let lt = radius * half_tan;
            let t1 = x - d1 * lt;
            let t2 = x + d2 * lt;
            push_line(&mut pts, p1, t1, STEP);
            s_turn_start = polyline_len(&pts);
            let normal = if delta > 0.0 { -r1 } else { r1 };
            let center = t1 + normal * radius;
            let a0 = (t1 - center).heading();
            let n = ((radius * delta.abs()) / STEP).ceil().max(1.0) as usize;
            for k in 1..=n {
                let a = a0 + delta * k as f64 / n as f64;
                pts.push(center + Point2::from_heading(a) * radius);
            }
            s_turn_end = polyline_len(&pts);
            push_line(&mut pts, t2, p2, STEP);
        }
        push_line(&mut pts, p2, end, STEP);
        pts.dedup_by(|a, b| a.dist(*b) < 1e-9);
        ReferencePath {
            cumulative: cumulative_lengths(&pts),
            points: pts,
            turn_start_m: s_turn_start,
            turn_end_m: s_turn_end,
        }
    }
}

fn right_normal(d: Point2) -> Point2 {
    Point2::new(d.y, -d.x)
}

fn classify_turn(d1: Point2, d2: Point2) -> ManeuverKind {
    let angle = d1.cross(d2).atan2(d1.dot(d2));
    if angle.abs() < 30f64.to_radians() {
        ManeuverKind::Straight
    } else if angle > 0.0 {
        ManeuverKind::Left
    } else {
        ManeuverKind::Right
    }
}

fn push_line(pts: &mut Vec<Point2>, a: Point2, b: Point2, step: f64) {
    let n = (a.dist(b) / step).ceil().max(1.0) as usize;
    if pts.is_empty() {
        pts.push(a);
    }
    for k in 1..=n {
        pts.push(a.lerp(b, k as f64 / n as f64));
    }
}

fn polyline_len(pts: &[Point2]) -> f64 {
    crate::geometry::polyline_length(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Maneuver {
    pub from: usize,
    pub to: usize,
    pub kind: ManeuverKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub points: Vec<Point2>,
    pub cumulative: Vec<f64>,
    pub turn_start_m: f64,
    pub turn_end_m: f64,
}

impl ReferencePath {
    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        point_at_arc_length(&self.points, &self.cumulative, s)
    }

    /// Unit tangent at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Point2 {
        let a = self.point_at((s - 0.05).max(0.0));
        let b = self.point_at((s + 0.05).min(self.length()));
        let d = b - a;
        d * (1.0 / d.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub trajectory: Trajectory,
    pub maneuver: Maneuver,
    /// Speed the driver targets through the intersection.
    pub maneuver_speed_mps: f64,
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Vec<Trajectory>> {
    Ok(generate_labeled(cfg)?.into_iter().map(|l| l.trajectory).collect())
}

pub fn generate_labeled(cfg: &ScenarioConfig) -> Result<Vec<LabeledTrajectory>> {
    cfg.validate()?;
    let maneuvers = cfg.available_maneuvers();
    let n_arms = cfg.arm_headings_deg.len();
    let paths: Vec<Vec<Option<ReferencePath>>> = (0..n_arms)
        .map(|a| {
            (0..n_arms)
                .map(|b| {
                    maneuvers
                        .iter()
                        .any(|m| m.from == a && m.to == b)
                        .then(|| cfg.reference_path(a, b))
                })
                .collect()
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = Vec::with_capacity(cfg.count);
    for k in 0..cfg.count {
        let arms: Vec<usize> = (0..n_arms).filter(|&a| maneuvers.iter().any(|m| m.from == a)).collect();
        let from = arms[rng.random_range(0..arms.len())];
        let options: Vec<&Maneuver> = maneuvers.iter().filter(|m| m.from == from).collect();
        let weights: Vec<f64> = options.iter().map(|m| cfg.demand.weight(m.kind)).collect();
        let total: f64 = weights.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = options[options.len() - 1];
        for (m, w) in options.iter().zip(&weights) {
            if pick < *w {
                chosen = m;
                break;
            }
            pick -= w;
        }
        let cruise = (cfg.cruise_speed_mps + cfg.cruise_speed_sigma * std_normal.sample(&mut rng)).max(3.0);
        let turn_noise = cfg.turn_speed_sigma * std_normal.sample(&mut rng);
        let cautious = rng.random::<f64>() < cfg.cautious_fraction;
        let target = match chosen.kind {
            ManeuverKind::Right => cfg.right_turn_speed_mps + turn_noise,
            ManeuverKind::Left => cfg.left_turn_speed_mps + turn_noise,
            ManeuverKind::Straight if cautious => cfg.cautious_speed_mps + turn_noise,
            ManeuverKind::Straight => cruise,
        }
        .clamp(1.0, cruise);
        let lateral = cfg.lateral_sigma_m * std_normal.sample(&mut rng);
        let path = paths[chosen.from][chosen.to].as_ref().expect("path built for maneuver");
        let profile = SpeedProfile {
            cruise,
            target,
            decel: cfg.decel_mps2,
            accel: cfg.accel_mps2,
            s1: path.turn_start_m,
            s2: path.turn_end_m,
        };
        let t0 = k as f64 * 1.5;
        let dt = 1.0 / cfg.sample_hz;
        const SUBSTEPS: usize = 20;
        let mut s = 0.0;
        let mut points = Vec::new();
        let mut step = 0usize;
        while s <= path.length() {
            let tangent = path.tangent_at(s);
            let pos = path.point_at(s) + right_normal(tangent) * lateral;
            let nx = cfg.noise_sigma_m * std_normal.sample(&mut rng);
            let ny = cfg.noise_sigma_m * std_normal.sample(&mut rng);
            points.push(TrajectoryPoint::new(t0 + step as f64 * dt, pos.x + nx, pos.y + ny));
            for _ in 0..SUBSTEPS {
                // Midpoint rule on ds/dt = v(s).
                let h = dt / SUBSTEPS as f64;
                let mid = s + 0.5 * h * profile.speed(s);
                s += h * profile.speed(mid);
            }
            step += 1;
        }
        let trajectory = Trajectory::new(format!("v{k:05}"), points)?;
        out.push(LabeledTrajectory {
            trajectory,
            maneuver: *chosen,
            maneuver_speed_mps: target,
        });
    }
    Ok(out)
}

/// Cruise, brake to the maneuver speed before the turn, hold it through the turn, accelerate
/// back to cruise.
#[derive(Debug, Clone, Copy)]
struct SpeedProfile {
    cruise: f64,
    target: f64,
    decel: f64,
    accel: f64,
    s1: f64,
    s2: f64,
}

impl SpeedProfile {
    fn speed(&self, s: f64) -> f64 {
        let v = if s < self.s1 {
            (self.target * self.target + 2.0 * self.decel * (self.s1 - s)).sqrt()
        } else if s <= self.s2 {
            self.target
        } else {
            (self.target * self.target + 2.0 * self.accel * (s - self.s2)).sqrt()
        };
        v.min(self.cruise)
    }
}
