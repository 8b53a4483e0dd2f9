//! Map matching of trajectories to directed edge sequences, pruning of never-used edge
//! directions, and node classification from observed transitions.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::graph::{EdgeId, EdgeIndex, NodeId, NodeKind, TopoGraph};
use crate::model::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub max_snap_m: f64,
    /// Consecutive timestamps without an admissible candidate before giving up.
    pub max_gap_samples: usize,
    /// Replace the last edge by a sibling leaving the same node when the vehicle turns out to
    /// follow the sibling.
    pub sibling_replace: bool,
    /// Insert a single missing edge when the candidate is exactly one hop ahead.
    pub bridge_single_gap: bool,
    /// Samples on each side used to smooth the movement direction.
    pub heading_window: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_snap_m: 3.0,
            max_gap_samples: 10,
            sibling_replace: true,
            bridge_single_gap: true,
            heading_window: 2,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_snap_m > 0.0 && self.max_snap_m.is_finite()) {
            return Err(Error::Config("matching.max_snap_m must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MatchStatus {
    Matched,
    Unmatched(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedTrajectory {
    pub trajectory_id: String,
    /// Ordered, connected edge sequence `E_T`.
    pub edges: Vec<EdgeId>,
    /// Timestamp index at which each edge of `edges` was entered.
    pub entry_indices: Vec<usize>,
    /// Nearest aligned edge per timestamp.
    pub assignments: Vec<Option<EdgeId>>,
    pub status: MatchStatus,
}

impl MatchedTrajectory {
    pub fn is_matched(&self) -> bool {
        self.status == MatchStatus::Matched
    }
}

/// Direction of travel at each sample, from the chord over `±window` samples.
fn smoothed_directions(traj: &Trajectory, window: usize) -> Vec<Point2> {
    let pts = traj.points();
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i.saturating_sub(window)].pos();
            let b = pts[(i + window).min(n - 1)].pos();
            let d = b - a;
            if d.norm() > 1e-9 {
                d * (1.0 / d.norm())
            } else {
                Point2::from_heading(traj.headings()[i])
            }
        })
        .collect()
}

/// Nearest edge within the snap radius whose local direction agrees with `dir`. Of two
/// antiparallel twins only the aligned one can qualify.
fn candidate(g: &TopoGraph, index: &EdgeIndex, p: Point2, dir: Point2, snap: f64) -> Option<EdgeId> {
    index
        .query(g, p, snap)
        .into_iter()
        .find(|h| {
            let e = g.edge(h.edge).unwrap();
            e.polyline().len() < 2 || e.segment_direction(h.segment).dot(dir) > 0.0
        })
        .map(|h| h.edge)
}

pub fn match_trajectory(traj: &Trajectory, g: &TopoGraph, index: &EdgeIndex, cfg: &MatchConfig) -> MatchedTrajectory {
    let dirs = smoothed_directions(traj, cfg.heading_window);
    let mut edges: Vec<EdgeId> = Vec::new();
    let mut entries: Vec<usize> = Vec::new();
    let mut assignments = Vec::with_capacity(traj.len());
    let mut miss_run = 0usize;
    let mut stuck_run = 0usize;
    let mut status = MatchStatus::Matched;

    for (i, pt) in traj.points().iter().enumerate() {
        let cand = candidate(g, index, pt.pos(), dirs[i], cfg.max_snap_m);
        assignments.push(cand);
        let Some(c) = cand else {
            if !edges.is_empty() {
                miss_run += 1;
            }
            if miss_run > cfg.max_gap_samples {
                status = MatchStatus::Unmatched(format!("no edge within snap distance after sample {i}"));
                break;
            }
            continue;
        };
        miss_run = 0;
        let Some(&last) = edges.last() else {
            edges.push(c);
            entries.push(i);
            continue;
        };
        if c == last {
            stuck_run = 0;
            continue;
        }
        let le = g.edge(last).unwrap();
        let ce = g.edge(c).unwrap();
        if ce.from == le.to {
            edges.push(c);
            entries.push(i);
            stuck_run = 0;
        } else if cfg.sibling_replace
            && ce.from == le.from
            && edges.len() >= 2
            && !edges[..edges.len() - 1].contains(&c)
        {
            *edges.last_mut().unwrap() = c;
            stuck_run = 0;
        } else if let Some(b) = cfg
            .bridge_single_gap
            .then(|| single_bridge(g, le.to, ce.from))
            .flatten()
            .filter(|&b| b != last && b != c && ce.to != le.to)
        {
            edges.push(b);
            entries.push(i);
            edges.push(c);
            entries.push(i);
            stuck_run = 0;
        } else {
            stuck_run += 1;
            if stuck_run > cfg.max_gap_samples {
                status = MatchStatus::Unmatched(format!("{c} is not reachable from {last} (sample {i})"));
                break;
            }
        }
    }
    if edges.is_empty() && status == MatchStatus::Matched {
        status = MatchStatus::Unmatched("never within snap distance of the graph".into());
    }
    assignments.resize(traj.len(), None);
    MatchedTrajectory {
        trajectory_id: traj.id().to_string(),
        edges,
        entry_indices: entries,
        assignments,
        status,
    }
}

/// The unique edge `a → b`, if exactly one exists.
fn single_bridge(g: &TopoGraph, a: NodeId, b: NodeId) -> Option<EdgeId> {
    let mut it = g.out_edges(a).iter().filter(|&&e| g.edge(e).unwrap().to == b);
    let first = *it.next()?;
    it.next().is_none().then_some(first)
}

/// Matches every trajectory in parallel; output order follows input order.
pub fn match_all(trajs: &[Trajectory], g: &TopoGraph, cfg: &MatchConfig) -> Vec<MatchedTrajectory> {
    let index = EdgeIndex::new(g, (cfg.max_snap_m * 2.0).max(1.0));
    trajs.par_iter().map(|t| match_trajectory(t, g, &index, cfg)).collect()
}

/// Re-checks the connectivity and no-repeat invariants of a matched sequence.
pub fn validate_match(m: &MatchedTrajectory, g: &TopoGraph) -> Result<()> {
    if m.edges.len() != m.entry_indices.len() {
        return Err(Error::Validation("entry index count differs from edge count".into()));
    }
    for w in m.edges.windows(2) {
        let (a, b) = (
            g.edge(w[0])
                .ok_or_else(|| Error::Validation(format!("unknown edge {}", w[0])))?,
            g.edge(w[1])
                .ok_or_else(|| Error::Validation(format!("unknown edge {}", w[1])))?,
        );
        if w[0] == w[1] {
            return Err(Error::Validation(format!(
                "{}: repeated edge {}",
                m.trajectory_id, w[0]
            )));
        }
        if a.to != b.from {
            return Err(Error::Validation(format!(
                "{}: {} does not lead into {}",
                m.trajectory_id, w[0], w[1]
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub edges_before: usize,
    pub edges_removed: usize,
    pub nodes_removed: usize,
}

/// Sets traversal counts from the matched sequences and drops edges never traversed, together
/// with the nodes they leave isolated. Unmatched trajectories do not count.
pub fn prune_unused_edges(g: &TopoGraph, matches: &[MatchedTrajectory]) -> (TopoGraph, PruneStats) {
    let mut counts: BTreeMap<EdgeId, u64> = BTreeMap::new();
    for m in matches.iter().filter(|m| m.is_matched()) {
        for &e in &m.edges {
            *counts.entry(e).or_default() += 1;
        }
    }
    let mut out = g.clone();
    let ids: Vec<EdgeId> = out.edges().map(|e| e.id).collect();
    for id in ids {
        out.set_traversal_count(id, counts.get(&id).copied().unwrap_or(0));
    }
    out.retain_edges(|e| e.traversal_count > 0);
    let stats = PruneStats {
        edges_before: g.edge_count(),
        edges_removed: g.edge_count() - out.edge_count(),
        nodes_removed: g.node_count() - out.node_count(),
    };
    (out, stats)
}

/// Observed `(node, in-edge, out-edge)` transition counts. The in-edge is `None` for the first
/// edge of a sequence, which records a departure from its start node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionObservations {
    counts: BTreeMap<(NodeId, Option<EdgeId>, EdgeId), u64>,
}

impl TransitionObservations {
    pub fn from_matches(g: &TopoGraph, matches: &[MatchedTrajectory]) -> Self {
        let mut counts = BTreeMap::new();
        for m in matches.iter().filter(|m| m.is_matched()) {
            let Some(&first) = m.edges.first() else {
                continue;
            };
            if let Some(e) = g.edge(first) {
                *counts.entry((e.from, None, first)).or_default() += 1;
            }
            for w in m.edges.windows(2) {
                if let Some(e) = g.edge(w[0]) {
                    *counts.entry((e.to, Some(w[0]), w[1])).or_default() += 1;
                }
            }
        }
        Self { counts }
    }

    pub fn count(&self, node: NodeId, inbound: Option<EdgeId>, out: EdgeId) -> u64 {
        self.counts.get(&(node, inbound, out)).copied().unwrap_or(0)
    }

    /// Observed successors of an in-edge context at a node, with counts.
    pub fn successors(&self, node: NodeId, inbound: Option<EdgeId>) -> Vec<(EdgeId, u64)> {
        self.counts
            .range((node, inbound, EdgeId(0))..=(node, inbound, EdgeId(u32::MAX)))
            .map(|(&(_, _, o), &c)| (o, c))
            .collect()
    }

    /// In-edge contexts observed at a node.
    pub fn contexts(&self, node: NodeId) -> Vec<Option<EdgeId>> {
        let set: BTreeSet<Option<EdgeId>> = self.counts.keys().filter(|k| k.0 == node).map(|k| k.1).collect();
        set.into_iter().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, Option<EdgeId>, EdgeId), u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassifyReport {
    pub unclassified: Vec<NodeId>,
}

/// Assigns node kinds from degrees and observed transitions. Departures (in-edge `None`) only
/// count at nodes without in-edges.
pub fn classify_nodes(g: &TopoGraph, obs: &TransitionObservations) -> (TopoGraph, ClassifyReport) {
    let mut out = g.clone();
    let mut report = ClassifyReport::default();
    for n in g.nodes() {
        let kind = classify_one(g, obs, n.id);
        if kind == NodeKind::Unclassified {
            report.unclassified.push(n.id);
        }
        out.set_kind(n.id, kind);
    }
    if !report.unclassified.is_empty() {
        log::debug!("{} nodes left unclassified", report.unclassified.len());
    }
    (out, report)
}

fn classify_one(g: &TopoGraph, obs: &TransitionObservations, node: NodeId) -> NodeKind {
    let (din, dout) = (g.in_edges(node).len(), g.out_edges(node).len());
    if din == 0 && dout > 0 {
        return NodeKind::Start;
    }
    if dout == 0 && din > 0 {
        return NodeKind::End;
    }
    let branching = g
        .in_edges(node)
        .iter()
        .any(|&e| obs.successors(node, Some(e)).len() >= 2);
    if branching {
        return NodeKind::Decision;
    }
    let deterministic = g
        .in_edges(node)
        .iter()
        .all(|&e| obs.successors(node, Some(e)).len() == 1);
    if din >= 2 && dout >= 2 && deterministic {
        return NodeKind::Crossover;
    }
    NodeKind::Unclassified
}

/// True for nodes where a vehicle chooses between several observed successors: Decision
/// nodes, and Start nodes whose departures spread over more than one out-edge.
pub fn is_decision_point(g: &TopoGraph, obs: &TransitionObservations, node: NodeId) -> bool {
    match g.node(node).map(|n| n.kind) {
        Some(NodeKind::Decision) => true,
        Some(NodeKind::Start) => obs.successors(node, None).len() >= 2,
        _ => false,
    }
}

pub fn write_matches_csv(path: impl AsRef<Path>, matches: &[MatchedTrajectory]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "trajectory_id,seq_index,edge_id").map_err(|e| Error::io(path, e))?;
    for m in matches.iter().filter(|m| m.is_matched()) {
        for (k, e) in m.edges.iter().enumerate() {
            writeln!(w, "{},{},{}", m.trajectory_id, k, e.0).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::graph::{Edge, Node};
    use crate::model::points_from_tuples;

    /// Nodes A(0,0) B(20,0) C(40,0) D(20,20); edges in both directions on A-B, B-C, B-D.
    pub(crate) fn tee() -> TopoGraph {
        let pos = [(0.0, 0.0), (20.0, 0.0), (40.0, 0.0), (20.0, 20.0)];
        let nodes = pos
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Node {
                id: NodeId(i as u32),
                pos: Point2::new(x, y),
                kind: NodeKind::Unclassified,
            })
            .collect();
        let mut edges = Vec::new();
        for (k, &(a, b)) in [(0u32, 1u32), (1, 2), (1, 3)].iter().enumerate() {
            let pa = Point2::new(pos[a as usize].0, pos[a as usize].1);
            let pb = Point2::new(pos[b as usize].0, pos[b as usize].1);
            edges.push(Edge::new(EdgeId(2 * k as u32), NodeId(a), NodeId(b), vec![pa, pb]));
            edges.push(Edge::new(EdgeId(2 * k as u32 + 1), NodeId(b), NodeId(a), vec![pb, pa]));
        }
        TopoGraph::new(nodes, edges).unwrap()
    }

    fn run(pts: &[(f64, f64, f64)], g: &TopoGraph) -> MatchedTrajectory {
        let t = Trajectory::new("t", points_from_tuples(pts)).unwrap();
        match_trajectory(&t, g, &EdgeIndex::new(g, 5.0), &MatchConfig::default())
    }

    fn straight(from: (f64, f64), to: (f64, f64), n: usize) -> Vec<(f64, f64, f64)> {
        (0..=n)
            .map(|k| {
                let u = k as f64 / n as f64;
                (
                    k as f64 * 0.1,
                    from.0 + u * (to.0 - from.0),
                    from.1 + u * (to.1 - from.1),
                )
            })
            .collect()
    }

    #[test]
    fn single_edge_in_direction() {
        let g = tee();
        let m = run(&straight((2.0, 0.3), (18.0, 0.3), 20), &g);
        assert_eq!(m.edges, vec![EdgeId(0)]);
        assert!(m.is_matched());
    }

    #[test]
    fn reverse_direction_uses_twins() {
        let g = tee();
        let m = run(&straight((38.0, -0.2), (2.0, -0.2), 40), &g);
        assert_eq!(m.edges, vec![EdgeId(3), EdgeId(1)]);
    }

    #[test]
    fn turn_through_junction() {
        let g = tee();
        let mut pts = straight((2.0, 0.0), (19.0, 0.0), 17);
        let t0 = pts.last().unwrap().0;
        for k in 1..=18 {
            pts.push((t0 + 0.1 * k as f64, 20.0, k as f64));
        }
        let m = run(&pts, &g);
        assert_eq!(m.edges, vec![EdgeId(0), EdgeId(4)]);
        validate_match(&m, &g).unwrap();
        // Oracle: collapse per-timestamp nearest aligned edges.
        let mut collapsed: Vec<EdgeId> = m.assignments.iter().flatten().copied().collect();
        collapsed.dedup();
        assert_eq!(collapsed, m.edges);
    }

    #[test]
    fn far_away_is_unmatched() {
        let g = tee();
        let m = run(&straight((0.0, 50.0), (30.0, 50.0), 30), &g);
        assert!(!m.is_matched());
    }

    #[test]
    fn prune_removes_unused_direction() {
        let g = tee();
        let m = run(&straight((2.0, 0.0), (38.0, 0.0), 36), &g);
        let (p, stats) = prune_unused_edges(&g, &[m]);
        let ids: Vec<EdgeId> = p.edges().map(|e| e.id).collect();
        assert_eq!(ids, vec![EdgeId(0), EdgeId(2)]);
        assert_eq!(stats.edges_removed, 4);
        assert_eq!(stats.nodes_removed, 1);
        assert!(p.edges().all(|e| e.traversal_count == 1));
    }

    fn synthetic_match(id: &str, edges: &[u32]) -> MatchedTrajectory {
        MatchedTrajectory {
            trajectory_id: id.into(),
            edges: edges.iter().map(|&e| EdgeId(e)).collect(),
            entry_indices: (0..edges.len()).collect(),
            assignments: vec![],
            status: MatchStatus::Matched,
        }
    }

    #[test]
    fn classification_kinds() {
        let g = tee();
        let ms = vec![synthetic_match("a", &[0, 2]), synthetic_match("b", &[0, 4])];
        let (p, _) = prune_unused_edges(&g, &ms);
        let obs = TransitionObservations::from_matches(&p, &ms);
        let (c, report) = classify_nodes(&p, &obs);
        assert_eq!(c.node(NodeId(0)).unwrap().kind, NodeKind::Start);
        assert_eq!(c.node(NodeId(1)).unwrap().kind, NodeKind::Decision);
        assert_eq!(c.node(NodeId(2)).unwrap().kind, NodeKind::End);
        assert_eq!(c.node(NodeId(3)).unwrap().kind, NodeKind::End);
        assert!(report.unclassified.is_empty());
        // Re-running is idempotent.
        let (c2, _) = classify_nodes(&c, &obs);
        assert_eq!(c, c2);
    }

    #[test]
    fn crossover_when_each_in_edge_is_deterministic() {
        // Two straight flows crossing at node X.
        let pos = [(0.0, 0.0), (20.0, 0.0), (10.0, -10.0), (10.0, 10.0), (10.0, 0.0)];
        let nodes = pos
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Node {
                id: NodeId(i as u32),
                pos: Point2::new(x, y),
                kind: NodeKind::Unclassified,
            })
            .collect();
        let p = |i: usize| Point2::new(pos[i].0, pos[i].1);
        let edges = [(0, 4), (4, 1), (2, 4), (4, 3)]
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| Edge::new(EdgeId(k as u32), NodeId(a as u32), NodeId(b as u32), vec![p(a), p(b)]))
            .collect();
        let g = TopoGraph::new(nodes, edges).unwrap();
        let ms = vec![synthetic_match("h", &[0, 1]), synthetic_match("v", &[2, 3])];
        let obs = TransitionObservations::from_matches(&g, &ms);
        let (c, _) = classify_nodes(&g, &obs);
        assert_eq!(c.node(NodeId(4)).unwrap().kind, NodeKind::Crossover);
        assert_eq!(c.node(NodeId(0)).unwrap().kind, NodeKind::Start);
    }

    #[test]
    fn start_with_two_departures_is_decision_point() {
        let g = tee();
        let ms = vec![synthetic_match("a", &[2]), synthetic_match("b", &[4])];
        let (p, _) = prune_unused_edges(&g, &ms);
        let obs = TransitionObservations::from_matches(&p, &ms);
        let (c, _) = classify_nodes(&p, &obs);
        assert_eq!(c.node(NodeId(1)).unwrap().kind, NodeKind::Start);
        assert!(is_decision_point(&c, &obs, NodeId(1)));
    }

    #[test]
    fn continuation_counts_are_conserved() {
        let g = tee();
        let ms = vec![
            synthetic_match("a", &[0, 2]),
            synthetic_match("b", &[0, 4]),
            synthetic_match("c", &[0, 4]),
        ];
        let obs = TransitionObservations::from_matches(&g, &ms);
        let total: u64 = obs.successors(NodeId(1), Some(EdgeId(0))).iter().map(|s| s.1).sum();
        let continuing = ms
            .iter()
            .filter(|m| m.edges.len() > 1 && m.edges[0] == EdgeId(0))
            .count();
        assert_eq!(total, continuing as u64);
    }
}
