//! Multi-hypothesis prediction from an observed trajectory prefix and a behavior map.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behavior::{BehaviorMap, NodeBehavior, Prototype};
use crate::error::{Error, Result};
use crate::geometry::{cumulative_lengths, Point2};
#[cfg(test)]
use crate::graph::NodeId;
use crate::graph::{write_json, EdgeHit, EdgeId, EdgeIndex, TopoGraph};
use crate::matching::{match_trajectory, MatchConfig};
use crate::model::{Trajectory, TrajectoryPoint, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub max_snap_m: f64,
    /// Weight of the heading term in the association score.
    pub heading_weight: f64,
    /// Window over which the current speed and heading are measured.
    pub speed_window_s: f64,
    pub max_hypotheses: usize,
    /// Lower bound on the length of the warped join segment.
    pub min_segment_m: f64,
    /// Guard against cycles of near-zero-length edges.
    pub max_sequence_len: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            max_snap_m: 3.0,
            heading_weight: 1.0,
            speed_window_s: 1.0,
            max_hypotheses: 64,
            min_segment_m: 5.0,
            max_sequence_len: 64,
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_snap_m > 0.0 && self.speed_window_s > 0.0 && self.min_segment_m >= 0.0) {
            return Err(Error::Config(
                "prediction: max_snap_m and speed_window_s must be > 0, min_segment_m >= 0".into(),
            ));
        }
        if !(self.heading_weight >= 0.0) || self.max_hypotheses == 0 || self.max_sequence_len == 0 {
            return Err(Error::Config(
                "prediction: heading_weight must be >= 0, max_hypotheses and max_sequence_len >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Current state of the observed vehicle: position of the last sample, mean speed over the
/// window and the heading of the displacement across it.
pub fn observed_state(observed: &Trajectory, window_s: f64) -> Result<VehicleState> {
    if observed.len() < 2 {
        return Err(Error::Validation("observed trajectory needs at least 2 points".into()));
    }
    let pts = observed.points();
    let last = pts[pts.len() - 1];
    let t0 = last.t - window_s;
    let first = pts.iter().find(|p| p.t >= t0).copied().unwrap_or(pts[0]);
    let d = last.pos() - first.pos();
    let heading = if d.norm() > 1e-9 {
        d.heading()
    } else {
        observed.headings()[pts.len() - 1]
    };
    VehicleState::new(
        last.x,
        last.y,
        heading,
        observed.mean_speed_over_last(window_s),
        0.0,
        0.0,
    )
}

/// Edge minimizing `distance / max_snap + heading_weight · (1 − cos Δθ)` among edges within
/// the snap radius; ties go to the smaller id.
pub fn associate_edge(state: &VehicleState, g: &TopoGraph, index: &EdgeIndex, cfg: &PredictConfig) -> Result<EdgeHit> {
    let hits = index.query(g, state.pos(), cfg.max_snap_m);
    let mut best: Option<(f64, EdgeHit)> = None;
    for h in hits {
        let dir = g.edge(h.edge).unwrap().segment_direction(h.segment);
        let cos = dir.dot(Point2::from_heading(state.heading));
        let score = h.distance / cfg.max_snap_m + cfg.heading_weight * (1.0 - cos);
        let better = match best {
            None => true,
            Some((s, b)) => score < s || (score == s && h.edge < b.edge),
        };
        if better {
            best = Some((score, h));
        }
    }
    best.map(|b| b.1).ok_or_else(|| {
        Error::NoMapCoverage(format!(
            "no edge within {} m of ({:.2}, {:.2})",
            cfg.max_snap_m, state.x, state.y
        ))
    })
}

/// Depth-first expansion along observed successors. `first_remaining_m` is the length of the
/// first edge still ahead of the vehicle. A sequence stops once it covers `horizon_m` or when
/// its last edge has no observed continuation.
pub fn enumerate_sequences(
    start: EdgeId,
    first_remaining_m: f64,
    horizon_m: f64,
    map: &BehaviorMap,
    max_len: usize,
) -> Vec<Vec<EdgeId>> {
    let mut out = Vec::new();
    let mut seq = vec![start];
    expand(&mut seq, first_remaining_m, horizon_m, map, max_len, &mut out);
    out
}

fn expand(
    seq: &mut Vec<EdgeId>,
    covered: f64,
    horizon: f64,
    map: &BehaviorMap,
    max_len: usize,
    out: &mut Vec<Vec<EdgeId>>,
) {
    let last = *seq.last().unwrap();
    let successors = map
        .graph
        .edge(last)
        .and_then(|e| map.context(e.to, Some(last)))
        .map(|b| b.table.successors())
        .unwrap_or_default();
    if covered >= horizon || successors.is_empty() || seq.len() >= max_len {
        out.push(seq.clone());
        return;
    }
    for next in successors {
        let len = map.graph.edge(next).map_or(0.0, |e| e.length());
        seq.push(next);
        expand(seq, covered + len, horizon, map, max_len, out);
        seq.pop();
    }
}

/// Quantities of the two-cluster probability blend for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationTrace {
    pub v_m: f64,
    pub slow: usize,
    pub fast: usize,
    pub v_slow: f64,
    pub v_fast: f64,
    pub delta_slow: f64,
    pub delta_fast: f64,
    pub delta: f64,
    /// `(successor, p_slow, p_fast, p)` for every observed successor.
    pub successors: Vec<(EdgeId, f64, f64, f64)>,
}

impl InterpolationTrace {
    pub fn probability(&self, h: EdgeId) -> f64 {
        self.successors.iter().find(|s| s.0 == h).map_or(0.0, |s| s.3)
    }
}

/// `p = p_slow · δ_fast/δ + p_fast · δ_slow/δ` with `δ_slow = |v_m − v_slow|`,
/// `δ_fast = |v_fast − v_m|`, `δ = |v_fast − v_slow|`. Returns `p_slow` when `δ = 0`.
pub fn blend(v_m: f64, v_slow: f64, v_fast: f64, p_slow: f64, p_fast: f64) -> (f64, f64, f64, f64) {
    let delta_slow = (v_m - v_slow).abs();
    let delta_fast = (v_fast - v_m).abs();
    let delta = (v_fast - v_slow).abs();
    let p = if delta > 0.0 {
        p_slow * (delta_fast / delta) + p_fast * (delta_slow / delta)
    } else {
        p_slow
    };
    (delta_slow, delta_fast, delta, p)
}

/// Blends the rows of the clusters bracketing `v_m`. Outside the range of centers, or with a
/// single cluster, the nearest cluster's row is used as is.
pub fn interpolate(v_m: f64, behavior: &NodeBehavior) -> InterpolationTrace {
    let centers = behavior.centers();
    assert!(!centers.is_empty(), "context without clusters");
    let below = centers.iter().rposition(|&c| c <= v_m);
    let above = centers.iter().position(|&c| c > v_m);
    let (slow, fast) = match (below, above) {
        (Some(s), Some(f)) => (s, f),
        (Some(s), None) => (s, s),
        (None, Some(f)) => (f, f),
        (None, None) => unreachable!(),
    };
    let (v_slow, v_fast) = (centers[slow], centers[fast]);
    let rows = &behavior.table.rows;
    let mut successors = Vec::new();
    let mut deltas = (0.0, 0.0, 0.0);
    for h in behavior.table.successors() {
        let (ps, pf) = (rows[slow].probability(h), rows[fast].probability(h));
        let (ds, df, d, p) = blend(v_m, v_slow, v_fast, ps, pf);
        deltas = (ds, df, d);
        successors.push((h, ps, pf, p));
    }
    if successors.is_empty() {
        let (ds, df, d, _) = blend(v_m, v_slow, v_fast, 0.0, 0.0);
        deltas = (ds, df, d);
    }
    InterpolationTrace {
        v_m,
        slow,
        fast,
        v_slow,
        v_fast,
        delta_slow: deltas.0,
        delta_fast: deltas.1,
        delta: deltas.2,
        successors,
    }
}

pub fn interpolate_probability(v_m: f64, behavior: &NodeBehavior, h: EdgeId) -> f64 {
    interpolate(v_m, behavior).probability(h)
}

/// Warps `n_seg` prototype points starting at `cut` so the first lands on `observed_end`:
/// point `k` moves by `(1 − k/(n_seg − 1)) · v_n` with `v_n = observed_end − prototype[cut]`.
/// Timestamps keep the prototype's spacing, starting at `observed_end.t`.
pub fn transform_segment(
    prototype: &[TrajectoryPoint],
    observed_end: TrajectoryPoint,
    cut: usize,
    n_seg: usize,
) -> Result<Vec<TrajectoryPoint>> {
    if n_seg < 2 {
        return Err(Error::DegenerateSegment(format!(
            "segment needs at least 2 points, got {n_seg}"
        )));
    }
    if cut + n_seg > prototype.len() {
        return Err(Error::DegenerateSegment(format!(
            "segment {cut}..{} exceeds prototype of {} points",
            cut + n_seg,
            prototype.len()
        )));
    }
    let seg = &prototype[cut..cut + n_seg];
    let vn = observed_end.pos() - seg[0].pos();
    let denom = (n_seg - 1) as f64;
    Ok(seg
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let f = 1.0 - k as f64 / denom;
            TrajectoryPoint::new(observed_end.t + (p.t - seg[0].t), p.x + f * vn.x, p.y + f * vn.y)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHypothesis {
    pub probability: f64,
    pub edge_sequence: Vec<EdgeId>,
    /// Starts at the observed trajectory's last point.
    pub points: Vec<TrajectoryPoint>,
}

impl PredictionHypothesis {
    pub fn to_trajectory(&self, id: impl Into<String>) -> Result<Trajectory> {
        Trajectory::new(id, self.points.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictionStatus {
    Ok,
    NoMapCoverage(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub status: PredictionStatus,
    pub state: Option<VehicleState>,
    pub hypotheses: Vec<PredictionHypothesis>,
}

/// A behavior map with its spatial index, ready for repeated predictions.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    map: &'a BehaviorMap,
    index: EdgeIndex,
    cfg: PredictConfig,
}

impl<'a> Predictor<'a> {
    pub fn new(map: &'a BehaviorMap, cfg: PredictConfig) -> Self {
        Self {
            index: EdgeIndex::new(&map.graph, (cfg.max_snap_m * 2.0).max(1.0)),
            map,
            cfg,
        }
    }

    pub fn config(&self) -> &PredictConfig {
        &self.cfg
    }

    pub fn predict(&self, observed: &Trajectory, horizon_m: f64) -> Result<Prediction> {
        if !(horizon_m > 0.0) {
            return Err(Error::Validation("horizon must be > 0".into()));
        }
        let state = observed_state(observed, self.cfg.speed_window_s)?;
        let hit = match associate_edge(&state, &self.map.graph, &self.index, &self.cfg) {
            Ok(h) => h,
            Err(Error::NoMapCoverage(msg)) => {
                return Ok(Prediction {
                    status: PredictionStatus::NoMapCoverage(msg),
                    state: Some(state),
                    hypotheses: Vec::new(),
                })
            }
            Err(e) => return Err(e),
        };
        let e0 = self.map.graph.edge(hit.edge).unwrap();
        let along = e0.project(hit.point).arc_length;
        let seqs = enumerate_sequences(
            hit.edge,
            e0.length() - along,
            horizon_m,
            self.map,
            self.cfg.max_sequence_len,
        );
        let end = *observed.points().last().unwrap();
        let arrival = self.arrival_edge(observed, hit.edge);
        let mut hyps: Vec<PredictionHypothesis> = seqs
            .into_iter()
            .filter_map(|seq| self.build_hypothesis(seq, arrival, end, state.speed, horizon_m))
            .filter(|h| h.probability > 0.0 && h.points.len() >= 2)
            .collect();
        hyps.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then_with(|| a.edge_sequence.cmp(&b.edge_sequence))
        });
        hyps.truncate(self.cfg.max_hypotheses);
        let status = if hyps.is_empty() {
            PredictionStatus::NoMapCoverage("no prototype geometry ahead of the vehicle".into())
        } else {
            PredictionStatus::Ok
        };
        Ok(Prediction {
            status,
            state: Some(state),
            hypotheses: hyps,
        })
    }

    /// Edge the observed prefix used to reach `current`, when the prefix reaches back that far.
    fn arrival_edge(&self, observed: &Trajectory, current: EdgeId) -> Option<EdgeId> {
        let cfg = MatchConfig {
            max_snap_m: self.cfg.max_snap_m,
            ..MatchConfig::default()
        };
        let m = match_trajectory(observed, &self.map.graph, &self.index, &cfg);
        match m.edges.as_slice() {
            [.., prev, last] if *last == current => Some(*prev),
            _ => None,
        }
    }

    /// Contexts whose prototypes can serve the first edge: the one the vehicle came through if
    /// known, otherwise every context at the edge's tail that continued onto it.
    fn first_contexts(&self, edge: EdgeId, arrival: Option<EdgeId>) -> Vec<&NodeBehavior> {
        let Some(from) = self.map.graph.edge(edge).map(|e| e.from) else {
            return Vec::new();
        };
        if let Some(ctx) = self.map.context(from, arrival) {
            if ctx.clusters.iter().any(|c| c.prototypes.contains_key(&edge)) {
                return vec![ctx];
            }
        }
        self.map
            .contexts
            .values()
            .filter(|c| c.key.node == from && c.count_to(edge) > 0)
            .collect()
    }

    fn build_hypothesis(
        &self,
        seq: Vec<EdgeId>,
        arrival: Option<EdgeId>,
        end: TrajectoryPoint,
        v_m: f64,
        horizon_m: f64,
    ) -> Option<PredictionHypothesis> {
        let g = &self.map.graph;
        let mut chain = vec![end];
        let mut covered = 0.0;
        let mut probability = 1.0;
        let mut speed_here = v_m;
        let mut decisions = 0usize;
        for (k, &edge) in seq.iter().enumerate() {
            let contexts = if k == 0 {
                self.first_contexts(edge, arrival)
            } else {
                let prev = seq[k - 1];
                let ctx = self.map.context(g.edge(prev)?.to, Some(prev))?;
                let trace = interpolate(if decisions == 0 { v_m } else { speed_here }, ctx);
                if trace.successors.len() > 1 {
                    decisions += 1;
                }
                probability *= trace.probability(edge);
                vec![ctx]
            };
            if covered >= horizon_m {
                continue;
            }
            let v_sel = if k == 0 { v_m } else { speed_here };
            let anchor = *chain.last().unwrap();
            let fallback;
            let proto: &Prototype = match pick_prototype(&contexts, edge, anchor.pos(), v_sel) {
                Some(p) => p,
                None => {
                    fallback = Prototype::from_polyline(g.edge(edge)?.polyline(), v_sel, 0.25)?;
                    &fallback
                }
            };
            let pts = &proto.points;
            let cut = closest_index(pts, anchor.pos());
            if pts.len() - cut < 2 {
                continue;
            }
            let cum = cumulative_lengths(&pts[cut..].iter().map(|p| p.pos()).collect::<Vec<_>>());
            let remaining = *cum.last().unwrap();
            let span = remaining.min(self.cfg.min_segment_m.max(2.0 * anchor.pos().dist(pts[cut].pos())));
            let n_seg = cum.iter().take_while(|&&s| s <= span + 1e-12).count().max(2);
            let warped = transform_segment(pts, anchor, cut, n_seg).ok()?;
            let offset = anchor.t - pts[cut].t;
            let before = chain.len();
            chain.extend(warped.into_iter().skip(1));
            chain.extend(
                pts[cut + n_seg..]
                    .iter()
                    .map(|p| TrajectoryPoint::new(p.t + offset, p.x, p.y)),
            );
            covered += chain[before - 1..]
                .windows(2)
                .map(|w| w[0].pos().dist(w[1].pos()))
                .sum::<f64>();
            let speeds = proto.speeds();
            speed_here = *speeds.last().unwrap_or(&v_sel);
        }
        Some(PredictionHypothesis {
            probability,
            edge_sequence: seq,
            points: truncate_at_arc(&chain, horizon_m),
        })
    }
}

/// Prototype for `edge` whose speed at the point closest to `at` is nearest `v`. Cluster
/// centers describe the approach to the upstream node, so they only fit a vehicle standing at
/// that node; the prototype's own speed profile fits anywhere along the edge.
fn pick_prototype<'m>(contexts: &[&'m NodeBehavior], edge: EdgeId, at: Point2, v: f64) -> Option<&'m Prototype> {
    let mut best: Option<(f64, &Prototype)> = None;
    for ctx in contexts {
        for cluster in &ctx.clusters {
            let Some(p) = cluster.prototypes.get(&edge) else {
                continue;
            };
            let speeds = p.speeds();
            let Some(&s) = speeds.get(closest_index(&p.points, at)) else {
                continue;
            };
            let d = (s - v).abs();
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, p));
            }
        }
    }
    best.map(|b| b.1)
}

fn closest_index(pts: &[TrajectoryPoint], p: Point2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in pts.iter().enumerate() {
        let d = q.pos().dist(p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Cuts the chain where its arc length reaches `horizon`, interpolating the final point.
fn truncate_at_arc(chain: &[TrajectoryPoint], horizon: f64) -> Vec<TrajectoryPoint> {
    let mut out = vec![chain[0]];
    let mut s = 0.0;
    for w in chain.windows(2) {
        let d = w[0].pos().dist(w[1].pos());
        if s + d >= horizon {
            let u = if d > 0.0 { (horizon - s) / d } else { 1.0 };
            let p = w[0].pos().lerp(w[1].pos(), u);
            let t = w[0].t + (w[1].t - w[0].t) * u;
            if t > out.last().unwrap().t {
                out.push(TrajectoryPoint::new(t, p.x, p.y));
            }
            return out;
        }
        s += d;
        out.push(w[1]);
    }
    out
}

pub fn predict(observed: &Trajectory, map: &BehaviorMap, horizon_m: f64, cfg: &PredictConfig) -> Result<Prediction> {
    Predictor::new(map, *cfg).predict(observed, horizon_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisJson {
    pub probability: f64,
    pub edge_sequence: Vec<EdgeId>,
    /// `[t, x, y]` triples.
    pub points: Vec<[f64; 3]>,
}

impl From<&PredictionHypothesis> for HypothesisJson {
    fn from(h: &PredictionHypothesis) -> Self {
        Self {
            probability: h.probability,
            edge_sequence: h.edge_sequence.clone(),
            points: h.points.iter().map(|p| [p.t, p.x, p.y]).collect(),
        }
    }
}

pub fn hypotheses_to_json(hyps: &[PredictionHypothesis]) -> Vec<HypothesisJson> {
    hyps.iter().map(HypothesisJson::from).collect()
}

pub fn write_hypotheses(path: impl AsRef<Path>, hyps: &[PredictionHypothesis]) -> Result<()> {
    write_json(path.as_ref(), &hypotheses_to_json(hyps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::behavior::{build_behavior, BehaviorConfig, ContextKey, TransitionTable, VelocityCluster};
    use crate::geometry::point_at_arc_length;
    use crate::matching::{match_all, tests::tee, MatchConfig};

    fn drive(id: &str, line: &[Point2], speed: f64, dy: f64) -> Trajectory {
        let cum = cumulative_lengths(line);
        let total = *cum.last().unwrap();
        let n = (total / (speed * 0.1)).floor() as usize;
        let pts = (0..=n)
            .map(|i| {
                let p = point_at_arc_length(line, &cum, i as f64 * speed * 0.1);
                TrajectoryPoint::new(i as f64 * 0.1, p.x, p.y + dy)
            })
            .collect();
        Trajectory::new(id, pts).unwrap()
    }

    fn straight() -> Vec<Point2> {
        vec![Point2::new(0.0, 0.0), Point2::new(40.0, 0.0)]
    }

    fn turn() -> Vec<Point2> {
        let mut l = vec![Point2::new(0.0, 0.0), Point2::new(16.0, 0.0)];
        for i in 1..8 {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / 8.0;
            l.push(Point2::new(16.0 + 4.0 * a.sin(), 4.0 - 4.0 * a.cos()));
        }
        l.push(Point2::new(20.0, 4.0));
        l.push(Point2::new(20.0, 20.0));
        l
    }

    pub(crate) fn tee_map() -> BehaviorMap {
        let g = tee();
        let mut trajs = Vec::new();
        for i in 0..25 {
            let dy = (i % 5) as f64 * 0.1 - 0.2;
            let fast_turn = i % 5 == 0;
            let slow_straight = i % 5 == 1;
            trajs.push(drive(
                &format!("f{i}"),
                &if fast_turn { turn() } else { straight() },
                12.0 + dy,
                dy,
            ));
            trajs.push(drive(
                &format!("s{i}"),
                &if slow_straight { straight() } else { turn() },
                5.0 + dy,
                dy,
            ));
        }
        let matches = match_all(&trajs, &g, &MatchConfig::default());
        assert!(matches.iter().all(|m| m.is_matched()));
        build_behavior(&g, &trajs, &matches, &BehaviorConfig::default()).unwrap()
    }

    #[test]
    fn blend_oracle() {
        let (ds, df, d, p) = blend(6.0, 5.0, 10.0, 0.8, 0.2);
        assert_eq!((ds, df, d), (1.0, 4.0, 5.0));
        assert!((p - 0.68).abs() < 1e-12);
        assert_eq!(blend(5.0, 5.0, 10.0, 0.8, 0.2).3, 0.8);
        assert_eq!(blend(10.0, 5.0, 10.0, 0.8, 0.2).3, 0.2);
    }

    #[test]
    fn segment_warp_oracle() {
        let proto: Vec<_> = (0..5).map(|k| TrajectoryPoint::new(k as f64, k as f64, 0.0)).collect();
        let end = TrajectoryPoint::new(10.0, 0.0, 2.0);
        let w = transform_segment(&proto, end, 0, 5).unwrap();
        let want = [2.0, 1.5, 1.0, 0.5, 0.0];
        for (k, p) in w.iter().enumerate() {
            assert_eq!(p.x, k as f64);
            assert_eq!(p.y, want[k]);
            assert_eq!(p.t, 10.0 + k as f64);
        }
        assert!(transform_segment(&proto, end, 0, 1).is_err());
        assert!(transform_segment(&proto, end, 3, 3).is_err());
    }

    #[test]
    fn two_clusters_bracket_the_probability() {
        let map = tee_map();
        let ctx = map.context(NodeId(1), Some(EdgeId(0))).unwrap();
        assert_eq!(ctx.clusters.len(), 2);
        let lo = interpolate(0.0, ctx);
        assert!((lo.probability(EdgeId(4)) - 0.8).abs() < 1e-12);
        let hi = interpolate(30.0, ctx);
        assert!((hi.probability(EdgeId(2)) - 0.8).abs() < 1e-12);
        let c = ctx.centers();
        let mid = interpolate((c[0] + c[1]) / 2.0, ctx);
        assert!((mid.probability(EdgeId(2)) - 0.5).abs() < 1e-9);
        let sum: f64 = mid.successors.iter().map(|s| s.3).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fast_vehicle_goes_straight() {
        let map = tee_map();
        let obs = drive("q", &straight(), 12.0, 0.0).slice(0..12);
        let pred = predict(&obs, &map, 30.0, &PredictConfig::default()).unwrap();
        assert_eq!(pred.status, PredictionStatus::Ok);
        assert_eq!(pred.hypotheses.len(), 2);
        let top = &pred.hypotheses[0];
        assert_eq!(top.edge_sequence, vec![EdgeId(0), EdgeId(2)]);
        assert!(top.probability > 0.75);
        let sum: f64 = pred.hypotheses.iter().map(|h| h.probability).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        let end = *obs.points().last().unwrap();
        for h in &pred.hypotheses {
            assert_eq!(h.points[0], end);
            assert!(h.points.windows(2).all(|w| w[1].t > w[0].t));
            let len: f64 = h.points.windows(2).map(|w| w[0].pos().dist(w[1].pos())).sum();
            assert!(len <= 30.0 + 1e-9, "{len}");
        }
        let last = top.points.last().unwrap();
        assert!(last.x > 35.0 && last.y.abs() < 1.0, "{last:?}");
    }

    #[test]
    fn slow_vehicle_turns() {
        let map = tee_map();
        let obs = drive("q", &straight(), 5.0, 0.0).slice(0..40);
        let pred = predict(&obs, &map, 25.0, &PredictConfig::default()).unwrap();
        let top = &pred.hypotheses[0];
        assert_eq!(top.edge_sequence, vec![EdgeId(0), EdgeId(4)]);
        let last = top.points.last().unwrap();
        assert!((last.x - 20.0).abs() < 1.5 && last.y > 5.0, "{last:?}");
    }

    #[test]
    fn off_map_reports_no_coverage() {
        let map = tee_map();
        let pts = (0..20)
            .map(|i| TrajectoryPoint::new(i as f64 * 0.1, i as f64, 100.0))
            .collect();
        let obs = Trajectory::new("far", pts).unwrap();
        let pred = predict(&obs, &map, 20.0, &PredictConfig::default()).unwrap();
        assert!(matches!(pred.status, PredictionStatus::NoMapCoverage(_)));
        assert!(pred.hypotheses.is_empty());
    }

    #[test]
    fn enumeration_stops_at_horizon() {
        let map = tee_map();
        assert_eq!(
            enumerate_sequences(EdgeId(0), 20.0, 10.0, &map, 64),
            vec![vec![EdgeId(0)]]
        );
        let all = enumerate_sequences(EdgeId(0), 20.0, 30.0, &map, 64);
        assert_eq!(all, vec![vec![EdgeId(0), EdgeId(2)], vec![EdgeId(0), EdgeId(4)]]);
    }

    fn context(node: u32, in_edge: Option<u32>, rows: &[(f64, &[(u32, u64)])]) -> NodeBehavior {
        let key = ContextKey {
            node: NodeId(node),
            in_edge: in_edge.map(EdgeId),
        };
        let mut visits = Vec::new();
        let mut clusters = Vec::new();
        for (c, (center, counts)) in rows.iter().enumerate() {
            for &(e, n) in counts.iter() {
                visits.extend(std::iter::repeat_n((c, EdgeId(e)), n as usize));
            }
            clusters.push(VelocityCluster {
                index: c,
                center_mps: *center,
                members: Vec::new(),
                prototypes: BTreeMap::new(),
            });
        }
        NodeBehavior {
            key,
            clusters,
            table: TransitionTable::build(key, rows.len(), &visits),
        }
    }

    fn hand_map(contexts: Vec<NodeBehavior>) -> BehaviorMap {
        BehaviorMap {
            graph: tee(),
            contexts: contexts.into_iter().map(|c| (c.key, c)).collect(),
        }
    }

    #[test]
    fn tee_probabilities_follow_the_blend() {
        let map = hand_map(vec![
            context(0, None, &[(6.0, &[(0, 10)])]),
            context(1, Some(0), &[(5.0, &[(2, 8), (4, 2)]), (10.0, &[(2, 2), (4, 8)])]),
        ]);
        let pts = (0..=10)
            .map(|i| TrajectoryPoint::new(i as f64 * 0.1, 2.0 + 0.6 * i as f64, 0.0))
            .collect();
        let obs = Trajectory::new("q", pts).unwrap();
        let pred = predict(&obs, &map, 30.0, &PredictConfig::default()).unwrap();
        let p: Vec<f64> = pred.hypotheses.iter().map(|h| h.probability).collect();
        assert_eq!(p.len(), 2);
        assert!((p[0] - 0.68).abs() < 1e-9 && (p[1] - 0.32).abs() < 1e-9, "{p:?}");
        assert_eq!(pred.hypotheses[0].edge_sequence, vec![EdgeId(0), EdgeId(2)]);
    }

    #[test]
    fn heading_outweighs_distance() {
        // 1 m from the northbound edge, 2 m from the eastbound one, heading east.
        let g = tee();
        let index = EdgeIndex::new(&g, 6.0);
        let state = VehicleState::new(21.0, 2.0, 0.0, 5.0, 0.0, 0.0).unwrap();
        let cfg = PredictConfig::default();
        assert_eq!(associate_edge(&state, &g, &index, &cfg).unwrap().edge, EdgeId(2));
        let north = VehicleState::new(21.0, 2.0, std::f64::consts::FRAC_PI_2, 5.0, 0.0, 0.0).unwrap();
        assert_eq!(associate_edge(&north, &g, &index, &cfg).unwrap().edge, EdgeId(4));
        let on = VehicleState::new(10.0, 0.0, std::f64::consts::PI, 5.0, 0.0, 0.0).unwrap();
        assert_eq!(associate_edge(&on, &g, &index, &cfg).unwrap().edge, EdgeId(1));
    }
}
