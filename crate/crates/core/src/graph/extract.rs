use std::collections::{BTreeMap, HashSet};

use super::{Edge, EdgeId, Node, NodeId, NodeKind, TopoGraph};
use crate::geometry::{simplify_polyline, Point2};
use crate::raster::{BinaryImage, GridGeometry, Skeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterKind {
    Endpoint,
    Junction,
    /// Synthetic node placed on a cycle that has no endpoint or junction.
    Anchor,
}

/// A node in pixel space: one endpoint pixel, or a clump of adjacent junction pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeCluster {
    pub kind: ClusterKind,
    /// Sorted pixel indices.
    pub pixels: Vec<usize>,
}

impl NodeCluster {
    pub fn centroid(&self, geometry: &GridGeometry) -> Point2 {
        let n = self.pixels.len() as f64;
        let sum = self.pixels.iter().fold(Point2::default(), |acc, &i| {
            let (c, r) = geometry.coords(i);
            acc + geometry.pixel_to_world(c, r)
        });
        sum * (1.0 / n)
    }
}

/// Pixel chain between two clusters. `interior` excludes the node pixels and may be empty
/// when two clusters touch directly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelPath {
    pub from: usize,
    pub to: usize,
    pub interior: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceResult {
    pub nodes: Vec<NodeCluster>,
    pub paths: Vec<PixelPath>,
    /// Foreground pixels that could not be assigned to any path.
    pub dangling_pixels: usize,
}

/// Endpoints (exactly one foreground neighbor) and junction clumps (three or more), ordered by
/// their lowest pixel index.
pub fn detect_nodes(skel: &Skeleton) -> Vec<NodeCluster> {
    let img = skel.image();
    let data = img.data();
    let mut junction = vec![false; data.len()];
    let mut out = Vec::new();
    for i in 0..data.len() {
        if !data[i] {
            continue;
        }
        match img.neighbor_count(i) {
            1 => out.push(NodeCluster {
                kind: ClusterKind::Endpoint,
                pixels: vec![i],
            }),
            n if n >= 3 => junction[i] = true,
            _ => {}
        }
    }
    let mut seen = vec![false; data.len()];
    for start in 0..data.len() {
        if !junction[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            pixels.push(i);
            for j in img.neighbors8(i) {
                if junction[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        pixels.sort_unstable();
        out.push(NodeCluster {
            kind: ClusterKind::Junction,
            pixels,
        });
    }
    out.sort_by_key(|c| c.pixels[0]);
    out
}

/// Follows every foreground neighbor of every node pixel to the next node.
///
/// Pixels forming a tiny loop back onto the cluster they left are absorbed into that
/// cluster. Cycles without nodes get an anchor at their lowest pixel and become a self-loop.
pub fn trace_edges(skel: &Skeleton, nodes: Vec<NodeCluster>) -> TraceResult {
    let img = skel.image();
    let data = img.data();
    let mut nodes = nodes;
    let mut node_of: Vec<Option<usize>> = vec![None; data.len()];
    for (ci, c) in nodes.iter().enumerate() {
        for &p in &c.pixels {
            node_of[p] = Some(ci);
        }
    }
    let mut visited = vec![false; data.len()];
    let mut paths = Vec::new();
    let mut touching = HashSet::new();
    let mut dangling = 0;

    let mut ci = 0;
    loop {
        if ci >= nodes.len() {
            // Every reachable chain is traced; look for node-free cycles.
            match next_free_cycle(img, &node_of, &visited) {
                FreeComponent::Cycle(anchor) => {
                    node_of[anchor] = Some(nodes.len());
                    nodes.push(NodeCluster {
                        kind: ClusterKind::Anchor,
                        pixels: vec![anchor],
                    });
                }
                FreeComponent::Dangling(pixels) => {
                    dangling += pixels.len();
                    for p in pixels {
                        visited[p] = true;
                    }
                    continue;
                }
                FreeComponent::None => break,
            }
        }
        let pixels = nodes[ci].pixels.clone();
        for &p in &pixels {
            for q in img.neighbors8(p) {
                if !data[q] {
                    continue;
                }
                match node_of[q] {
                    Some(cj) if cj == ci => {}
                    Some(cj) => {
                        if ci < cj && touching.insert((ci, cj)) {
                            paths.push(PixelPath {
                                from: ci,
                                to: cj,
                                interior: Vec::new(),
                            });
                        }
                    }
                    None if visited[q] => {}
                    None => match walk(img, &node_of, &mut visited, p, q) {
                        Walk::Reached(cj, interior) => {
                            if cj == ci && interior.len() <= 2 {
                                for &i in &interior {
                                    node_of[i] = Some(ci);
                                    nodes[ci].pixels.push(i);
                                }
                                nodes[ci].pixels.sort_unstable();
                            } else {
                                paths.push(PixelPath {
                                    from: ci,
                                    to: cj,
                                    interior,
                                });
                            }
                        }
                        Walk::DeadEnd(interior) => dangling += interior.len(),
                    },
                }
            }
        }
        ci += 1;
    }
    if dangling > 0 {
        log::debug!("trace_edges: {dangling} dangling skeleton pixels dropped");
    }
    TraceResult {
        nodes,
        paths,
        dangling_pixels: dangling,
    }
}

enum Walk {
    Reached(usize, Vec<usize>),
    DeadEnd(Vec<usize>),
}

fn walk(img: &BinaryImage, node_of: &[Option<usize>], visited: &mut [bool], start: usize, first: usize) -> Walk {
    let data = img.data();
    let mut interior = vec![first];
    visited[first] = true;
    let mut prev = start;
    let mut cur = first;
    loop {
        let mut node_hit = None;
        let mut next = None;
        for j in img.neighbors8(cur) {
            if !data[j] || j == prev {
                continue;
            }
            if let Some(cj) = node_of[j] {
                // Prefer the lowest cluster index for determinism.
                if node_hit.is_none_or(|(c, _)| cj < c) {
                    node_hit = Some((cj, j));
                }
            } else if !visited[j] && next.is_none() {
                next = Some(j);
            }
        }
        // A node directly adjacent to the start of the chain is the one we came from only if
        // it is the same pixel; any other node pixel ends the chain.
        if let Some((cj, _)) = node_hit {
            return Walk::Reached(cj, interior);
        }
        match next {
            Some(j) => {
                visited[j] = true;
                interior.push(j);
                prev = cur;
                cur = j;
            }
            None => return Walk::DeadEnd(interior),
        }
    }
}

enum FreeComponent {
    None,
    Cycle(usize),
    Dangling(Vec<usize>),
}

/// First unvisited, node-free foreground component. It is a cycle when all its pixels have
/// exactly two foreground neighbors.
fn next_free_cycle(img: &BinaryImage, node_of: &[Option<usize>], visited: &[bool]) -> FreeComponent {
    let data = img.data();
    let Some(start) = (0..data.len()).find(|&i| data[i] && node_of[i].is_none() && !visited[i]) else {
        return FreeComponent::None;
    };
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    let mut pixels = Vec::new();
    while let Some(i) = stack.pop() {
        pixels.push(i);
        for j in img.neighbors8(i) {
            if data[j] && node_of[j].is_none() && !visited[j] && seen.insert(j) {
                stack.push(j);
            }
        }
    }
    pixels.sort_unstable();
    if pixels.len() >= 3 && pixels.iter().all(|&i| img.neighbor_count(i) == 2) {
        FreeComponent::Cycle(pixels[0])
    } else {
        FreeComponent::Dangling(pixels)
    }
}

/// Collapses junction clusters joined by a chain of at most `max_interior_px` pixels into one
/// node. Thinning a wide intersection leaves a tangle of short links between nearby junctions;
/// merging them yields a single branch point per physical junction.
pub fn merge_close_junctions(trace: &TraceResult, max_interior_px: usize) -> TraceResult {
    let n = trace.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let is_junction = |i: usize| trace.nodes[i].kind == ClusterKind::Junction;
    let mut merged_path = vec![false; trace.paths.len()];
    for (k, p) in trace.paths.iter().enumerate() {
        if p.from != p.to && is_junction(p.from) && is_junction(p.to) && p.interior.len() <= max_interior_px {
            let (a, b) = (find(&mut parent, p.from), find(&mut parent, p.to));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
            merged_path[k] = true;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().extend(&trace.nodes[i].pixels);
    }
    // Absorb the pixels of collapsed links, and of short links that now start and end on the
    // same merged node.
    for (k, p) in trace.paths.iter().enumerate() {
        let (a, b) = (find(&mut parent, p.from), find(&mut parent, p.to));
        if a == b && is_junction(p.from) && p.interior.len() <= max_interior_px {
            merged_path[k] = true;
        }
        if merged_path[k] {
            groups.get_mut(&a).unwrap().extend(&p.interior);
        }
    }
    let mut order: Vec<(usize, Vec<usize>)> = groups
        .into_iter()
        .map(|(root, mut px)| {
            px.sort_unstable();
            px.dedup();
            (root, px)
        })
        .collect();
    order.sort_by_key(|(_, px)| px[0]);
    let mut new_index = vec![0; n];
    let mut nodes = Vec::with_capacity(order.len());
    for (k, (root, px)) in order.into_iter().enumerate() {
        new_index[root] = k;
        nodes.push(NodeCluster {
            kind: trace.nodes[root].kind,
            pixels: px,
        });
    }
    let paths = trace
        .paths
        .iter()
        .zip(&merged_path)
        .filter(|(_, &m)| !m)
        .map(|(p, _)| PixelPath {
            from: new_index[find(&mut parent, p.from)],
            to: new_index[find(&mut parent, p.to)],
            interior: p.interior.clone(),
        })
        .collect();
    TraceResult {
        nodes,
        paths,
        dangling_pixels: trace.dangling_pixels,
    }
}

/// World-space bidirectional graph. Node `k` is cluster `k`; path `k` yields edges `2k`
/// (forward) and `2k + 1` (reverse).
pub fn build_graph(trace: &TraceResult, geometry: &GridGeometry, simplify_tolerance_m: f64) -> TopoGraph {
    let nodes: Vec<Node> = trace
        .nodes
        .iter()
        .enumerate()
        .map(|(k, c)| Node {
            id: NodeId(k as u32),
            pos: c.centroid(geometry),
            kind: NodeKind::Unclassified,
        })
        .collect();
    let mut edges = Vec::with_capacity(2 * trace.paths.len());
    for (k, p) in trace.paths.iter().enumerate() {
        let mut raw = Vec::with_capacity(p.interior.len() + 2);
        raw.push(nodes[p.from].pos);
        raw.extend(p.interior.iter().map(|&i| {
            let (c, r) = geometry.coords(i);
            geometry.pixel_to_world(c, r)
        }));
        raw.push(nodes[p.to].pos);
        let line = simplify_polyline(&raw, simplify_tolerance_m);
        let rev: Vec<Point2> = line.iter().rev().copied().collect();
        let (a, b) = (NodeId(p.from as u32), NodeId(p.to as u32));
        edges.push(Edge::new(EdgeId(2 * k as u32), a, b, line));
        edges.push(Edge::new(EdgeId(2 * k as u32 + 1), b, a, rev));
    }
    TopoGraph::new(nodes, edges).expect("paths reference traced clusters")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_segment_distance;

    fn skel(rows: &[&str]) -> Skeleton {
        Skeleton::try_from_image(BinaryImage::from_ascii(rows)).unwrap()
    }

    fn y_shape() -> Skeleton {
        skel(&[
            "#.......#",
            ".#.....#.",
            "..#...#..",
            "...#.#...",
            "....#....",
            "....#....",
            "....#....",
            "....#....",
        ])
    }

    #[test]
    fn line_has_two_endpoints_and_one_path() {
        let s = skel(&["..........", ".########.", ".........."]);
        let nodes = detect_nodes(&s);
        assert_eq!(nodes.len(), 2);
        assert!(nodes.iter().all(|c| c.kind == ClusterKind::Endpoint));
        let t = trace_edges(&s, nodes);
        assert_eq!(t.paths.len(), 1);
        assert_eq!(t.paths[0].interior.len(), 6);
        assert_eq!(t.dangling_pixels, 0);
    }

    #[test]
    fn y_shape_nodes_and_paths() {
        let s = y_shape();
        let nodes = detect_nodes(&s);
        let ends = nodes.iter().filter(|c| c.kind == ClusterKind::Endpoint).count();
        let junctions = nodes.iter().filter(|c| c.kind == ClusterKind::Junction).count();
        assert_eq!((ends, junctions), (3, 1));
        let t = trace_edges(&s, nodes);
        assert_eq!(t.paths.len(), 3);
        let j = t.nodes.iter().position(|c| c.kind == ClusterKind::Junction).unwrap();
        assert!(t.paths.iter().all(|p| p.from == j || p.to == j));
    }

    #[test]
    fn ring_gets_anchor_self_loop() {
        let s = skel(&["..#..", ".#.#.", "#...#", ".#.#.", "..#.."]);
        assert!(detect_nodes(&s).is_empty());
        let t = trace_edges(&s, vec![]);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.nodes[0].kind, ClusterKind::Anchor);
        assert_eq!(t.paths.len(), 1);
        assert_eq!(t.paths[0].from, t.paths[0].to);
        assert_eq!(t.paths[0].interior.len(), 7);
    }

    #[test]
    fn disjoint_lines_give_two_paths() {
        let s = skel(&["#####...", "........", "...#####"]);
        let t = trace_edges(&s, detect_nodes(&s));
        assert_eq!(t.paths.len(), 2);
    }

    #[test]
    fn build_graph_is_bidirectional_and_collinear_chain_simplifies() {
        let s = skel(&["..........", ".########.", ".........."]);
        let t = trace_edges(&s, detect_nodes(&s));
        let g = build_graph(&t, s.geometry(), 0.3);
        assert_eq!(g.edge_count(), 2);
        let e0 = g.edge(EdgeId(0)).unwrap();
        let e1 = g.edge(EdgeId(1)).unwrap();
        assert_eq!((e0.from, e0.to), (e1.to, e1.from));
        assert_eq!(e0.polyline().len(), 2);
        assert_eq!(g.twin(EdgeId(0)), Some(EdgeId(1)));
    }

    #[test]
    fn simplified_polyline_stays_within_tolerance() {
        let s = skel(&[
            "#.........",
            ".#........",
            "..##......",
            "....###...",
            ".......#..",
            "........##",
        ]);
        let t = trace_edges(&s, detect_nodes(&s));
        let tol = 0.8;
        let g = build_graph(&t, s.geometry(), tol);
        let e = g.edge(EdgeId(0)).unwrap();
        let line = e.polyline();
        for &i in &t.paths[0].interior {
            let (c, r) = s.geometry().coords(i);
            let p = s.geometry().pixel_to_world(c, r);
            let d = line
                .windows(2)
                .map(|w| point_segment_distance(p, w[0], w[1]))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= tol + 1e-12, "deviation {d}");
        }
    }

    #[test]
    fn node_positions_register_to_source_pixels() {
        let s = y_shape();
        let t = trace_edges(&s, detect_nodes(&s));
        let geo = s.geometry();
        for c in &t.nodes {
            if c.pixels.len() == 1 {
                let p = c.centroid(geo);
                let (col, row) = geo.world_to_pixel(p).unwrap();
                assert_eq!(geo.index(col, row), c.pixels[0]);
            }
        }
    }

    #[test]
    fn close_junctions_merge() {
        // Two junctions linked by a 1-pixel bridge.
        let s = skel(&[
            "#.....#", ".#...#.", "..#.#..", "...#...", "...#...", "...#...", "..#.#..", ".#...#.", "#.....#",
        ]);
        let t = trace_edges(&s, detect_nodes(&s));
        let junctions = t.nodes.iter().filter(|c| c.kind == ClusterKind::Junction).count();
        assert_eq!(junctions, 2);
        let m = merge_close_junctions(&t, 3);
        assert_eq!(m.nodes.iter().filter(|c| c.kind == ClusterKind::Junction).count(), 1);
        assert_eq!(m.paths.len(), 4);
        let unmerged = merge_close_junctions(&t, 0);
        assert_eq!(unmerged.paths.len(), 5);
    }
}
