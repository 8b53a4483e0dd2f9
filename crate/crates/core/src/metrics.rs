//! Trajectory similarity measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, Point2};
use crate::model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub medt: f64,
    pub medp: f64,
    pub god: f64,
    pub avd: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            medt: 0.5,
            medp: 0.5,
            god: 0.0,
            avd: 0.0,
        }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.medt, self.medp, self.god, self.avd];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config(format!(
                "metric weights must be finite and >= 0: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBreakdown {
    pub medt: f64,
    pub medp: f64,
    pub god: f64,
    pub avd: f64,
    pub combined: f64,
    /// Set when either trajectory had zero end-to-end displacement.
    pub god_degenerate: bool,
}

/// Mean distance from each predicted point to the ground truth at the same timestamp.
/// Predicted points outside the ground-truth time range are skipped.
pub fn medt(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let (sum, n) = pred
        .points()
        .iter()
        .filter_map(|p| gt.position_at(p.t).map(|q| p.pos().dist(q)))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(Error::Validation(format!(
            "no temporal overlap between {} and {}",
            pred.id(),
            gt.id()
        )));
    }
    Ok(sum / n as f64)
}

/// Distance from `p` to the polyline through `line`.
pub fn distance_to_path(p: Point2, line: &[Point2]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => p.dist(line[0]),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Mean distance from each predicted point to the ground-truth path, ignoring time.
pub fn medp(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Validation("medp needs non-empty trajectories".into()));
    }
    let line = gt.positions();
    let sum: f64 = pred.points().iter().map(|p| distance_to_path(p.pos(), &line)).sum();
    Ok(sum / pred.len() as f64)
}

fn displacement(t: &Trajectory) -> Point2 {
    let p = t.points();
    p[p.len() - 1].pos() - p[0].pos()
}

/// Angle between end-to-end displacements; `(0, true)` when either is zero.
pub fn god(pred: &Trajectory, gt: &Trajectory) -> Result<(f64, bool)> {
    if pred.len() < 2 || gt.len() < 2 {
        return Err(Error::Validation("god needs at least 2 points per trajectory".into()));
    }
    let (a, b) = (displacement(pred), displacement(gt));
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Ok((0.0, true));
    }
    Ok((a.cross(b).atan2(a.dot(b)).abs(), false))
}

fn average_speed(t: &Trajectory) -> f64 {
    t.length() / (t.end_time() - t.start_time())
}

/// Difference of average speeds, each taken as path length over duration.
pub fn avd(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if pred.len() < 2 || gt.len() < 2 {
        return Err(Error::Validation("avd needs at least 2 points per trajectory".into()));
    }
    Ok((average_speed(pred) - average_speed(gt)).abs())
}

pub fn combined_measure(pred: &Trajectory, gt: &Trajectory, w: &MetricWeights) -> Result<SimilarityBreakdown> {
    w.validate()?;
    let medt = medt(pred, gt)?;
    let medp = medp(pred, gt)?;
    let (god, god_degenerate) = if pred.len() >= 2 && gt.len() >= 2 {
        god(pred, gt)?
    } else {
        (0.0, true)
    };
    let avd = if pred.len() >= 2 && gt.len() >= 2 {
        avd(pred, gt)?
    } else {
        0.0
    };
    Ok(SimilarityBreakdown {
        medt,
        medp,
        god,
        avd,
        combined: w.medt * medt + w.medp * medp + w.god * god + w.avd * avd,
        god_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrajectoryPoint;

    fn line(id: &str, speed: f64, dy: f64, t_shift: f64, n: usize) -> Trajectory {
        let pts = (0..n)
            .map(|k| TrajectoryPoint::new(k as f64 * 0.1 + t_shift, k as f64 * 0.1 * speed, dy))
            .collect();
        Trajectory::new(id, pts).unwrap()
    }

    #[test]
    fn identity_and_offsets() {
        let a = line("a", 5.0, 0.0, 0.0, 50);
        let b = line("b", 5.0, 2.0, 0.0, 50);
        let w = MetricWeights::default();
        assert_eq!(combined_measure(&a, &a, &w).unwrap().combined, 0.0);
        assert!((medt(&b, &a).unwrap() - 2.0).abs() < 1e-12);
        assert!((medp(&b, &a).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_second_ahead() {
        let gt = line("gt", 5.0, 0.0, 0.0, 100);
        let pts = (0..40)
            .map(|k| TrajectoryPoint::new(k as f64 * 0.1, 5.0 + k as f64 * 0.5, 0.0))
            .collect();
        let pred = Trajectory::new("p", pts).unwrap();
        assert!((medt(&pred, &gt).unwrap() - 5.0).abs() < 1e-9);
        assert!(medp(&pred, &gt).unwrap() < 1e-12);
    }

    #[test]
    fn god_and_avd() {
        let a = line("a", 10.0, 0.0, 0.0, 11);
        let b = line("b", 8.0, 0.0, 0.0, 11);
        assert!((avd(&a, &b).unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(god(&a, &b).unwrap(), (0.0, false));
        let up = Trajectory::new(
            "u",
            (0..5).map(|k| TrajectoryPoint::new(k as f64, 0.0, k as f64)).collect(),
        )
        .unwrap();
        assert!((god(&a, &up).unwrap().0 - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn default_weights_average() {
        let gt = line("gt", 5.0, 0.0, 0.0, 100);
        let pred = line("p", 5.0, 2.0, 0.0, 30);
        let m = combined_measure(&pred, &gt, &MetricWeights::default()).unwrap();
        assert_eq!(m.combined, 0.5 * m.medt + 0.5 * m.medp);
        let only = MetricWeights {
            medt: 1.0,
            medp: 0.0,
            god: 0.0,
            avd: 0.0,
        };
        assert_eq!(combined_measure(&pred, &gt, &only).unwrap().combined, m.medt);
        let neg = MetricWeights { medt: -1.0, ..only };
        assert!(combined_measure(&pred, &gt, &neg).is_err());
    }

    #[test]
    fn no_overlap() {
        let a = line("a", 5.0, 0.0, 0.0, 10);
        let b = line("b", 5.0, 0.0, 100.0, 10);
        assert!(medt(&a, &b).is_err());
    }
}
