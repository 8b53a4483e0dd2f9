//! Constant yaw rate and acceleration baseline.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Point2};
use crate::model::{Trajectory, TrajectoryPoint, VehicleState};

/// Fits speed and heading as linear functions of time over the last `window_s` seconds.
///
/// Each pair of consecutive samples contributes its chord speed and chord heading at the
/// pair's mid time. Headings are unwrapped before fitting. Both fits are evaluated at the last
/// timestamp; the speed is floored at zero.
pub fn estimate_cyra_state(observed: &Trajectory, window_s: f64) -> Result<VehicleState> {
    let pts = observed.points();
    if pts.is_empty() {
        return Err(Error::Validation("empty trajectory".into()));
    }
    let t_end = pts[pts.len() - 1].t;
    let first = pts.iter().position(|p| p.t >= t_end - window_s - 1e-9).unwrap();
    let win = &pts[first..];
    if win.len() < 3 {
        return Err(Error::Validation(format!(
            "trajectory {}: CYRA fit needs at least 3 points in the last {window_s} s, has {}",
            observed.id(),
            win.len()
        )));
    }
    let mut tm = Vec::new();
    let mut v = Vec::new();
    let mut th = Vec::new();
    let mut prev: Option<f64> = None;
    for w in win.windows(2) {
        let d = w[1].pos() - w[0].pos();
        let dt = w[1].t - w[0].t;
        tm.push(0.5 * (w[0].t + w[1].t) - t_end);
        v.push(d.norm() / dt);
        let raw = if d.norm() > 0.0 {
            d.heading()
        } else {
            prev.unwrap_or(0.0)
        };
        let h = match prev {
            Some(p) => p + wrap_angle(raw - p),
            None => raw,
        };
        th.push(h);
        prev = Some(h);
    }
    let (v0, a) = line_fit(&tm, &v);
    let (theta, omega) = line_fit(&tm, &th);
    let last = pts[pts.len() - 1];
    VehicleState::new(last.x, last.y, wrap_angle(theta), v0.max(0.0), omega, a)
}

/// Least-squares `y = c + m·x`, returning `(c, m)`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let m = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - m * mx, m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Motion {
    pos: Point2,
    heading: f64,
    speed: f64,
}

/// Exact motion over `dt` at constant yaw rate and acceleration, with the speed held at zero
/// once it reaches zero.
fn advance(m: Motion, omega: f64, accel: f64, dt: f64) -> Motion {
    if accel < 0.0 && m.speed + accel * dt < 0.0 {
        let t_stop = -m.speed / accel;
        let stopped = advance_moving(m, omega, accel, t_stop);
        return Motion { speed: 0.0, ..stopped };
    }
    if m.speed == 0.0 && accel <= 0.0 {
        return m;
    }
    advance_moving(m, omega, accel, dt)
}

fn advance_moving(m: Motion, omega: f64, accel: f64, dt: f64) -> Motion {
    let (v0, th0) = (m.speed, m.heading);
    let v1 = v0 + accel * dt;
    let th1 = th0 + omega * dt;
    let d = if omega.abs() * dt < 1e-3 {
        // Gauss-Legendre, exact to well below a nanometer for nearly straight steps.
        const NODES: [(f64, f64); 5] = [
            (0.0, 0.568_888_888_888_888_9),
            (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let mut acc = Point2::new(0.0, 0.0);
        for (u, w) in NODES {
            let t = 0.5 * dt * (u + 1.0);
            acc = acc + Point2::from_heading(th0 + omega * t) * (w * (v0 + accel * t));
        }
        acc * (0.5 * dt)
    } else {
        let (s0, c0) = th0.sin_cos();
        let (s1, c1) = th1.sin_cos();
        let w2 = omega * omega;
        Point2::new(
            (v1 * s1 - v0 * s0) / omega + accel * (c1 - c0) / w2,
            -(v1 * c1 - v0 * c0) / omega + accel * (s1 - s0) / w2,
        )
    };
    Motion {
        pos: m.pos + d,
        heading: th1,
        speed: v1,
    }
}

fn start(state: &VehicleState) -> Motion {
    Motion {
        pos: state.pos(),
        heading: state.heading,
        speed: state.speed,
    }
}

/// Positions at the requested times (each `>= t0`), starting from `state` at `t0`.
pub fn cyra_positions(state: &VehicleState, t0: f64, times: &[f64]) -> Vec<Point2> {
    let mut m = start(state);
    let mut t = t0;
    times
        .iter()
        .map(|&ti| {
            let dt = ti - t;
            if dt > 0.0 {
                m = advance(m, state.yaw_rate, state.accel, dt);
                t = ti;
            }
            m.pos
        })
        .collect()
}

/// Rolls the model out from `t0` in steps of `dt_s` until the path covers `horizon_m`, the
/// vehicle has come to rest, or `max_duration_s` elapses. The result starts at the state.
pub fn cyra_predict(
    state: &VehicleState,
    t0: f64,
    horizon_m: f64,
    dt_s: f64,
    max_duration_s: f64,
) -> Result<Trajectory> {
    if !(dt_s > 0.0) {
        return Err(Error::Validation(format!("CYRA step must be > 0, got {dt_s}")));
    }
    let mut m = start(state);
    let mut pts = vec![TrajectoryPoint::new(t0, m.pos.x, m.pos.y)];
    let mut s = 0.0;
    let mut k = 1u64;
    while s < horizon_m {
        let t = t0 + k as f64 * dt_s;
        if t - t0 > max_duration_s + 1e-9 {
            break;
        }
        let next = advance(m, state.yaw_rate, state.accel, dt_s);
        s += next.pos.dist(m.pos);
        pts.push(TrajectoryPoint::new(t, next.pos.x, next.pos.y));
        let resting = next.speed == 0.0 && state.accel <= 0.0;
        m = next;
        k += 1;
        if resting {
            break;
        }
    }
    Trajectory::new("cyra", pts)
}
