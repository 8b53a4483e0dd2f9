//! Velocity clusters, transition tables and prototype trajectories learned from matched
//! trajectories.
//!
//! Statistics are kept per *context*: a node together with the edge the vehicle arrived on
//! (`None` for trajectories that begin at the node). Each context clusters the approach speeds
//! of its visits; every cluster carries transition counts to the observed out-edges and one
//! prototype per out-edge.

mod cluster;
mod prototype;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cluster::{cluster_velocities, sample_approach_velocity, window_mean_speed, ClusterParams, SpeedClusters};
pub use prototype::{extract_prototype, resample, MemberPath, Prototype, SweepParams};

use crate::error::{Error, Result};
use crate::geometry::project_on_polyline;
use crate::graph::{read_json, write_json, EdgeId, GraphJson, NodeId, TopoGraph};
use crate::matching::MatchedTrajectory;
use crate::model::{Trajectory, TrajectoryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub lookback_m: f64,
    pub eps_mps: f64,
    pub min_lns: usize,
    pub merge_gap_mps: f64,
    pub resample_m: f64,
    pub sweep_step_m: f64,
    pub prototype_min_lns: usize,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            lookback_m: 10.0,
            eps_mps: 1.5,
            min_lns: 3,
            merge_gap_mps: 2.0,
            resample_m: 0.25,
            sweep_step_m: 0.5,
            prototype_min_lns: 3,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.lookback_m, self.eps_mps, self.resample_m, self.sweep_step_m];
        if pos.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "behavior: lookback_m, eps_mps, resample_m and sweep_step_m must be > 0".into(),
            ));
        }
        if !(self.merge_gap_mps >= 0.0) || self.min_lns == 0 || self.prototype_min_lns == 0 {
            return Err(Error::Config(
                "behavior: merge_gap_mps must be >= 0 and min_lns values >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            eps_mps: self.eps_mps,
            min_lns: self.min_lns,
            merge_gap_mps: self.merge_gap_mps,
        }
    }

    pub fn sweep_params(&self) -> SweepParams {
        SweepParams {
            resample_m: self.resample_m,
            step_m: self.sweep_step_m,
            min_lns: self.prototype_min_lns,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextKey {
    pub node: NodeId,
    pub in_edge: Option<EdgeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityCluster {
    pub index: usize,
    pub center_mps: f64,
    /// Trajectory id of every visit in the cluster.
    pub members: Vec<String>,
    pub prototypes: BTreeMap<EdgeId, Prototype>,
}

impl VelocityCluster {
    pub fn n(&self) -> u64 {
        self.members.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRow {
    pub cluster: usize,
    pub n: u64,
    pub counts: BTreeMap<EdgeId, u64>,
}

impl TransitionRow {
    /// `n_ij / n_i`; zero for unobserved successors.
    pub fn probability(&self, edge: EdgeId) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.counts.get(&edge).copied().unwrap_or(0) as f64 / self.n as f64
    }

    pub fn transitions(&self) -> BTreeMap<EdgeId, f64> {
        self.counts.keys().map(|&e| (e, self.probability(e))).collect()
    }
}

/// Per-cluster successor counts of one context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionTable {
    pub node: NodeId,
    pub in_edge: Option<EdgeId>,
    pub rows: Vec<TransitionRow>,
}

impl TransitionTable {
    /// Counts `(cluster, out-edge)` pairs; one pair per visit.
    pub fn build(key: ContextKey, n_clusters: usize, visits: &[(usize, EdgeId)]) -> Self {
        let mut rows: Vec<TransitionRow> = (0..n_clusters)
            .map(|cluster| TransitionRow {
                cluster,
                n: 0,
                counts: BTreeMap::new(),
            })
            .collect();
        for &(c, e) in visits {
            rows[c].n += 1;
            *rows[c].counts.entry(e).or_default() += 1;
        }
        Self {
            node: key.node,
            in_edge: key.in_edge,
            rows,
        }
    }

    pub fn successors(&self) -> Vec<EdgeId> {
        let mut all: Vec<EdgeId> = self.rows.iter().flat_map(|r| r.counts.keys().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBehavior {
    pub key: ContextKey,
    pub clusters: Vec<VelocityCluster>,
    pub table: TransitionTable,
}

impl NodeBehavior {
    pub fn centers(&self) -> Vec<f64> {
        self.clusters.iter().map(|c| c.center_mps).collect()
    }

    /// Cluster whose center is closest to `v` (lower index on ties).
    pub fn nearest_cluster(&self, v: f64) -> usize {
        let mut best = 0;
        for (i, c) in self.clusters.iter().enumerate() {
            if (c.center_mps - v).abs() < (self.clusters[best].center_mps - v).abs() {
                best = i;
            }
        }
        best
    }

    /// Total observations of `edge` over all clusters.
    pub fn count_to(&self, edge: EdgeId) -> u64 {
        self.table
            .rows
            .iter()
            .map(|r| r.counts.get(&edge).copied().unwrap_or(0))
            .sum()
    }
}

/// Directed graph plus the learned behavior of every context.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorMap {
    pub graph: TopoGraph,
    pub contexts: BTreeMap<ContextKey, NodeBehavior>,
}

/// One passage of a trajectory through a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVisit {
    pub trajectory: usize,
    pub key: ContextKey,
    pub out_edge: EdgeId,
    /// Position of `out_edge` in the matched sequence.
    pub seq_index: usize,
    pub approach_speed: f64,
}

/// Every node passage of every matched trajectory, with its approach speed. `trajs` and
/// `matches` must be index-aligned.
pub fn collect_visits(
    trajs: &[Trajectory],
    matches: &[MatchedTrajectory],
    g: &TopoGraph,
    lookback_m: f64,
) -> Vec<NodeVisit> {
    let per_traj: Vec<Vec<NodeVisit>> = trajs
        .par_iter()
        .zip(matches.par_iter())
        .enumerate()
        .map(|(ti, (traj, m))| {
            if !m.is_matched() || m.edges.is_empty() {
                return Vec::new();
            }
            let positions = traj.positions();
            let arc = traj.arc_lengths();
            let last = traj.len() - 1;
            let mut out = Vec::with_capacity(m.edges.len());
            for k in 0..m.edges.len() {
                let out_edge = m.edges[k];
                let (node, in_edge, lo) = if k == 0 {
                    (g.edge(out_edge).unwrap().from, None, 0)
                } else {
                    (
                        g.edge(m.edges[k - 1]).unwrap().to,
                        Some(m.edges[k - 1]),
                        m.entry_indices[k - 1],
                    )
                };
                let hi = m
                    .entry_indices
                    .get(k + 1)
                    .copied()
                    .unwrap_or(last)
                    .max(lo + 1)
                    .min(last);
                let node_pos = g.node(node).unwrap().pos;
                let speed = if hi > lo {
                    let proj = project_on_polyline(node_pos, &positions[lo..=hi]).unwrap();
                    window_mean_speed(traj, &arc, arc[lo] + proj.arc_length, lookback_m)
                } else {
                    traj.speeds()[lo]
                };
                out.push(NodeVisit {
                    trajectory: ti,
                    key: ContextKey { node, in_edge },
                    out_edge,
                    seq_index: k,
                    approach_speed: speed,
                });
            }
            out
        })
        .collect();
    per_traj.into_iter().flatten().collect()
}

/// Samples of trajectory `traj` while it was on edge `k` of its matched sequence, including the
/// first sample of the following edge.
fn edge_portion(traj: &Trajectory, m: &MatchedTrajectory, k: usize) -> MemberPath {
    let start = m.entry_indices[k];
    let end = m
        .entry_indices
        .get(k + 1)
        .copied()
        .unwrap_or(traj.len() - 1)
        .min(traj.len() - 1);
    let range = start..=end.max(start);
    MemberPath {
        points: traj.points()[range.clone()].iter().map(TrajectoryPoint::pos).collect(),
        speeds: traj.speeds()[range].to_vec(),
    }
}

/// Clusters, tables and prototypes for every observed context.
pub fn build_behavior(
    g: &TopoGraph,
    trajs: &[Trajectory],
    matches: &[MatchedTrajectory],
    cfg: &BehaviorConfig,
) -> Result<BehaviorMap> {
    if trajs.len() != matches.len() {
        return Err(Error::Validation("trajectories and matches are not aligned".into()));
    }
    let visits = collect_visits(trajs, matches, g, cfg.lookback_m);
    let mut by_key: BTreeMap<ContextKey, Vec<&NodeVisit>> = BTreeMap::new();
    for v in &visits {
        by_key.entry(v.key).or_default().push(v);
    }
    let keyed: Vec<(ContextKey, Vec<&NodeVisit>)> = by_key.into_iter().collect();
    let built: Vec<Result<NodeBehavior>> = keyed
        .par_iter()
        .map(|(key, vs)| {
            let speeds: Vec<f64> = vs.iter().map(|v| v.approach_speed).collect();
            let sc = cluster_velocities(&speeds, &cfg.cluster_params())?;
            let pairs: Vec<(usize, EdgeId)> = vs.iter().zip(&sc.assignment).map(|(v, &c)| (c, v.out_edge)).collect();
            let table = TransitionTable::build(*key, sc.len(), &pairs);
            let mut clusters = Vec::with_capacity(sc.len());
            for (ci, &center) in sc.centers.iter().enumerate() {
                let in_cluster: Vec<&&NodeVisit> = vs
                    .iter()
                    .zip(&sc.assignment)
                    .filter(|(_, &c)| c == ci)
                    .map(|(v, _)| v)
                    .collect();
                let mut prototypes = BTreeMap::new();
                for &edge in table.rows[ci].counts.keys() {
                    let members: Vec<MemberPath> = in_cluster
                        .iter()
                        .filter(|v| v.out_edge == edge)
                        .map(|v| edge_portion(&trajs[v.trajectory], &matches[v.trajectory], v.seq_index))
                        .collect();
                    let proto = extract_prototype(&members, &cfg.sweep_params()).or_else(|| {
                        let line = g.edge(edge)?.polyline().to_vec();
                        Prototype::from_polyline(&line, center, cfg.resample_m)
                    });
                    if let Some(p) = proto {
                        prototypes.insert(edge, p);
                    }
                }
                clusters.push(VelocityCluster {
                    index: ci,
                    center_mps: center,
                    members: in_cluster
                        .iter()
                        .map(|v| trajs[v.trajectory].id().to_string())
                        .collect(),
                    prototypes,
                });
            }
            Ok(NodeBehavior {
                key: *key,
                clusters,
                table,
            })
        })
        .collect();
    let mut contexts = BTreeMap::new();
    for b in built {
        let b = b?;
        contexts.insert(b.key, b);
    }
    Ok(BehaviorMap {
        graph: g.clone(),
        contexts,
    })
}

impl BehaviorMap {
    pub fn context(&self, node: NodeId, in_edge: Option<EdgeId>) -> Option<&NodeBehavior> {
        self.contexts.get(&ContextKey { node, in_edge })
    }

    /// Context that most often led into `edge`, used when the arrival edge is unknown.
    pub fn entry_context(&self, edge: EdgeId) -> Option<&NodeBehavior> {
        let from = self.graph.edge(edge)?.from;
        self.contexts
            .range(
                ContextKey {
                    node: from,
                    in_edge: None,
                }..,
            )
            .take_while(|(k, _)| k.node == from)
            .map(|(_, b)| b)
            .filter(|b| b.count_to(edge) > 0)
            .max_by(|a, b| a.count_to(edge).cmp(&b.count_to(edge)).then(b.key.cmp(&a.key)))
    }

    pub fn to_json(&self) -> BehaviorMapJson {
        let behavior = self
            .contexts
            .values()
            .map(|b| ContextJson {
                node: b.key.node,
                in_edge: b.key.in_edge,
                clusters: b
                    .clusters
                    .iter()
                    .zip(&b.table.rows)
                    .map(|(c, row)| ClusterJson {
                        center_mps: c.center_mps,
                        n: row.n,
                        members: c.members.clone(),
                        counts: row.counts.clone(),
                        transitions: row.transitions(),
                        prototypes: c
                            .prototypes
                            .iter()
                            .map(|(&e, p)| {
                                (
                                    e,
                                    PrototypeJson {
                                        points: p.points.iter().map(|q| [q.x, q.y, q.t]).collect(),
                                        members: p.members,
                                        fallback: p.fallback,
                                    },
                                )
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        BehaviorMapJson {
            graph: self.graph.to_json(),
            behavior,
        }
    }

    pub fn from_json(json: &BehaviorMapJson) -> Result<Self> {
        let graph = TopoGraph::from_json(&json.graph)?;
        let mut contexts = BTreeMap::new();
        for c in &json.behavior {
            let key = ContextKey {
                node: c.node,
                in_edge: c.in_edge,
            };
            if graph.node(c.node).is_none() {
                return Err(Error::Validation(format!("behavior entry for unknown node {}", c.node)));
            }
            let mut clusters = Vec::new();
            let mut rows = Vec::new();
            for (i, cj) in c.clusters.iter().enumerate() {
                let counted: u64 = cj.counts.values().sum();
                if counted != cj.n || cj.n != cj.members.len() as u64 {
                    return Err(Error::Validation(format!(
                        "cluster {i} at {}: counts do not add up to n",
                        c.node
                    )));
                }
                let mut prototypes = BTreeMap::new();
                for (&e, p) in &cj.prototypes {
                    let points: Vec<TrajectoryPoint> = p
                        .points
                        .iter()
                        .map(|q| TrajectoryPoint::new(q[2], q[0], q[1]))
                        .collect();
                    if points.len() < 2 || points.windows(2).any(|w| w[1].t <= w[0].t) {
                        return Err(Error::Validation(format!(
                            "prototype for {e} is not a valid trajectory"
                        )));
                    }
                    prototypes.insert(
                        e,
                        Prototype {
                            points,
                            members: p.members,
                            fallback: p.fallback,
                        },
                    );
                }
                clusters.push(VelocityCluster {
                    index: i,
                    center_mps: cj.center_mps,
                    members: cj.members.clone(),
                    prototypes,
                });
                rows.push(TransitionRow {
                    cluster: i,
                    n: cj.n,
                    counts: cj.counts.clone(),
                });
            }
            let table = TransitionTable {
                node: key.node,
                in_edge: key.in_edge,
                rows,
            };
            contexts.insert(key, NodeBehavior { key, clusters, table });
        }
        Ok(Self { graph, contexts })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), &self.to_json())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let json: BehaviorMapJson = read_json(path.as_ref())?;
        Self::from_json(&json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeJson {
    /// `[x, y, t]` triples.
    pub points: Vec<[f64; 3]>,
    pub members: usize,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterJson {
    pub center_mps: f64,
    pub n: u64,
    pub members: Vec<String>,
    pub counts: BTreeMap<EdgeId, u64>,
    pub transitions: BTreeMap<EdgeId, f64>,
    pub prototypes: BTreeMap<EdgeId, PrototypeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextJson {
    pub node: NodeId,
    pub in_edge: Option<EdgeId>,
    pub clusters: Vec<ClusterJson>,
}

/// Graph JSON plus a `behavior` array with one entry per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorMapJson {
    #[serde(flatten)]
    pub graph: GraphJson,
    pub behavior: Vec<ContextJson>,
}
