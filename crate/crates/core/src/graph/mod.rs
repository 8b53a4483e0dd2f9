//! Directed topological graph with world-space edge polylines, and its extraction from a
//! skeleton image.

mod extract;
mod index;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use extract::{
    build_graph, detect_nodes, merge_close_junctions, trace_edges, ClusterKind, NodeCluster, PixelPath, TraceResult,
};
pub use index::{EdgeHit, EdgeIndex};

use crate::error::{Error, Result};
use crate::geometry::{polyline_length, project_on_polyline, Point2, PolylineProjection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl std::fmt::Display for EdgeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    #[default]
    Unclassified,
    Start,
    End,
    Crossover,
    Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub pos: Point2,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    polyline: Vec<Point2>,
    length: f64,
    pub traversal_count: u64,
}

impl Edge {
    pub fn new(id: EdgeId, from: NodeId, to: NodeId, polyline: Vec<Point2>) -> Self {
        let length = polyline_length(&polyline);
        Self {
            id,
            from,
            to,
            polyline,
            length,
            traversal_count: 0,
        }
    }

    pub fn polyline(&self) -> &[Point2] {
        &self.polyline
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn project(&self, p: Point2) -> PolylineProjection {
        project_on_polyline(p, &self.polyline).expect("edge polyline is never empty")
    }

    /// Unit direction of the polyline segment with the given index.
    pub fn segment_direction(&self, segment: usize) -> Point2 {
        let pl = &self.polyline;
        if pl.len() < 2 {
            return Point2::new(1.0, 0.0);
        }
        let s = segment.min(pl.len() - 2);
        let d = pl[s + 1] - pl[s];
        let n = d.norm();
        if n > 0.0 {
            d * (1.0 / n)
        } else {
            let d = pl[pl.len() - 1] - pl[0];
            let n = d.norm();
            if n > 0.0 {
                d * (1.0 / n)
            } else {
                Point2::new(1.0, 0.0)
            }
        }
    }
}

/// Directed graph `G = (E, V)` of maneuver nodes and drivable polyline edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopoGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out_edges: BTreeMap<NodeId, Vec<EdgeId>>,
    in_edges: BTreeMap<NodeId, Vec<EdgeId>>,
}

impl TopoGraph {
    /// Every edge must reference existing nodes.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let nodes: BTreeMap<_, _> = nodes.into_iter().map(|n| (n.id, n)).collect();
        let mut map = BTreeMap::new();
        for e in edges {
            if !nodes.contains_key(&e.from) || !nodes.contains_key(&e.to) {
                return Err(Error::Validation(format!(
                    "edge {} references a missing node ({} -> {})",
                    e.id, e.from, e.to
                )));
            }
            if e.polyline.is_empty() {
                return Err(Error::Validation(format!("edge {} has no polyline", e.id)));
            }
            if map.insert(e.id, e).is_some() {
                return Err(Error::Validation("duplicate edge id".into()));
            }
        }
        let mut g = Self {
            nodes,
            edges: map,
            ..Default::default()
        };
        g.rebuild_adjacency();
        Ok(g)
    }

    fn rebuild_adjacency(&mut self) {
        self.out_edges.clear();
        self.in_edges.clear();
        for e in self.edges.values() {
            self.out_edges.entry(e.from).or_default().push(e.id);
            self.in_edges.entry(e.to).or_default().push(e.id);
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        self.out_edges.get(&node).map_or(&[], Vec::as_slice)
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        self.in_edges.get(&node).map_or(&[], Vec::as_slice)
    }

    /// The antiparallel edge with the same geometry, if it exists.
    pub fn twin(&self, id: EdgeId) -> Option<EdgeId> {
        let e = self.edge(id)?;
        self.out_edges(e.to).iter().copied().find(|&cand| {
            let c = &self.edges[&cand];
            cand != id
                && c.to == e.from
                && c.polyline.len() == e.polyline.len()
                && c.polyline.iter().rev().eq(e.polyline.iter())
        })
    }

    pub fn set_kind(&mut self, node: NodeId, kind: NodeKind) {
        if let Some(n) = self.nodes.get_mut(&node) {
            n.kind = kind;
        }
    }

    pub fn set_traversal_count(&mut self, edge: EdgeId, count: u64) {
        if let Some(e) = self.edges.get_mut(&edge) {
            e.traversal_count = count;
        }
    }

    /// Keeps edges matching the predicate, then drops nodes left without any edge.
    pub fn retain_edges(&mut self, mut keep: impl FnMut(&Edge) -> bool) {
        self.edges.retain(|_, e| keep(e));
        self.rebuild_adjacency();
        let out = &self.out_edges;
        let inn = &self.in_edges;
        self.nodes.retain(|id, _| out.contains_key(id) || inn.contains_key(id));
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            nodes: self
                .nodes
                .values()
                .map(|n| NodeJson {
                    id: n.id,
                    x_m: n.pos.x,
                    y_m: n.pos.y,
                    kind: n.kind,
                })
                .collect(),
            edges: self
                .edges
                .values()
                .map(|e| EdgeJson {
                    id: e.id,
                    from: e.from,
                    to: e.to,
                    polyline: e.polyline.iter().map(|p| [p.x, p.y]).collect(),
                    traversal_count: e.traversal_count,
                })
                .collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let nodes = json
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id,
                pos: Point2::new(n.x_m, n.y_m),
                kind: n.kind,
            })
            .collect();
        let edges = json
            .edges
            .iter()
            .map(|e| {
                let mut edge = Edge::new(
                    e.id,
                    e.from,
                    e.to,
                    e.polyline.iter().map(|p| Point2::new(p[0], p[1])).collect(),
                );
                edge.traversal_count = e.traversal_count;
                edge
            })
            .collect();
        Self::new(nodes, edges)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), &self.to_json())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let json: GraphJson = read_json(path.as_ref())?;
        Self::from_json(&json)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub x_m: f64,
    pub y_m: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeJson {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    pub polyline: Vec<[f64; 2]>,
    pub traversal_count: u64,
}

/// On-disk graph: `{nodes:[{id,x_m,y_m,kind}], edges:[{id,from,to,polyline,traversal_count}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node_graph() -> TopoGraph {
        let nodes = vec![
            Node {
                id: NodeId(0),
                pos: Point2::new(0.0, 0.0),
                kind: NodeKind::Unclassified,
            },
            Node {
                id: NodeId(1),
                pos: Point2::new(10.0, 0.0),
                kind: NodeKind::Unclassified,
            },
        ];
        let fwd = vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)];
        let rev = fwd.iter().rev().copied().collect();
        TopoGraph::new(
            nodes,
            vec![
                Edge::new(EdgeId(0), NodeId(0), NodeId(1), fwd),
                Edge::new(EdgeId(1), NodeId(1), NodeId(0), rev),
            ],
        )
        .unwrap()
    }

    #[test]
    fn twins_are_found() {
        let g = two_node_graph();
        assert_eq!(g.twin(EdgeId(0)), Some(EdgeId(1)));
        assert_eq!(g.twin(EdgeId(1)), Some(EdgeId(0)));
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let mut g = two_node_graph();
        g.set_traversal_count(EdgeId(0), 7);
        g.set_kind(NodeId(1), NodeKind::End);
        let text = serde_json::to_string(&g.to_json()).unwrap();
        let back: GraphJson = serde_json::from_str(&text).unwrap();
        assert_eq!(TopoGraph::from_json(&back).unwrap(), g);
    }

    #[test]
    fn retain_drops_orphans() {
        let mut g = two_node_graph();
        g.retain_edges(|_| false);
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn dangling_reference_rejected() {
        let e = Edge::new(EdgeId(0), NodeId(0), NodeId(9), vec![Point2::default()]);
        assert!(TopoGraph::new(vec![], vec![e]).is_err());
    }
}
