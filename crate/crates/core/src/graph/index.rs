use std::collections::HashMap;

use super::{EdgeId, TopoGraph};
use crate::geometry::{project_on_segment, Point2};

/// Uniform-grid bucket index over edge polyline segments.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    cell_m: f64,
    buckets: HashMap<(i64, i64), Vec<(EdgeId, usize)>>,
}

/// Closest point of an edge to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeHit {
    pub edge: EdgeId,
    pub distance: f64,
    pub segment: usize,
    pub point: Point2,
}

impl EdgeIndex {
    pub fn new(g: &TopoGraph, cell_m: f64) -> Self {
        assert!(cell_m > 0.0);
        let mut buckets: HashMap<(i64, i64), Vec<(EdgeId, usize)>> = HashMap::new();
        for e in g.edges() {
            let pl = e.polyline();
            if pl.len() == 1 {
                buckets.entry(cell_of(pl[0], cell_m)).or_default().push((e.id, 0));
                continue;
            }
            for (s, w) in pl.windows(2).enumerate() {
                let (lo, hi) = (cell_of(min_pt(w[0], w[1]), cell_m), cell_of(max_pt(w[0], w[1]), cell_m));
                for cx in lo.0..=hi.0 {
                    for cy in lo.1..=hi.1 {
                        buckets.entry((cx, cy)).or_default().push((e.id, s));
                    }
                }
            }
        }
        Self { cell_m, buckets }
    }

    /// One hit per edge within `radius`, sorted by distance then edge id.
    pub fn query(&self, g: &TopoGraph, p: Point2, radius: f64) -> Vec<EdgeHit> {
        let lo = cell_of(Point2::new(p.x - radius, p.y - radius), self.cell_m);
        let hi = cell_of(Point2::new(p.x + radius, p.y + radius), self.cell_m);
        let mut best: HashMap<EdgeId, EdgeHit> = HashMap::new();
        for cx in lo.0..=hi.0 {
            for cy in lo.1..=hi.1 {
                let Some(items) = self.buckets.get(&(cx, cy)) else {
                    continue;
                };
                for &(id, s) in items {
                    let pl = g.edge(id).expect("index built from this graph").polyline();
                    let (q, _) = if pl.len() == 1 {
                        (pl[0], 0.0)
                    } else {
                        project_on_segment(p, pl[s], pl[s + 1])
                    };
                    let d = p.dist(q);
                    if d > radius {
                        continue;
                    }
                    let hit = EdgeHit {
                        edge: id,
                        distance: d,
                        segment: s,
                        point: q,
                    };
                    best.entry(id)
                        .and_modify(|h| {
                            if (d, s) < (h.distance, h.segment) {
                                *h = hit;
                            }
                        })
                        .or_insert(hit);
                }
            }
        }
        let mut hits: Vec<EdgeHit> = best.into_values().collect();
        hits.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.edge.cmp(&b.edge)));
        hits
    }
}

fn cell_of(p: Point2, cell: f64) -> (i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

fn min_pt(a: Point2, b: Point2) -> Point2 {
    Point2::new(a.x.min(b.x), a.y.min(b.y))
}

fn max_pt(a: Point2, b: Point2) -> Point2 {
    Point2::new(a.x.max(b.x), a.y.max(b.y))
}
