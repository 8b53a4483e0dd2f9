//! End-to-end map construction: raster, skeleton, graph, matching, behavior.

use log::{debug, info};
use serde::Serialize;

use crate::behavior::{build_behavior, BehaviorMap};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::graph::{build_graph, detect_nodes, merge_close_junctions, trace_edges, NodeKind};
use crate::matching::{classify_nodes, match_all, prune_unused_edges, MatchedTrajectory, TransitionObservations};
use crate::model::{split_and_trim, Trajectory};
use crate::raster::{binarize, morphological_denoise, prune_spurs, rasterize, thin, GridGeometry};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BuildDiagnostics {
    pub input_trajectories: usize,
    pub segments: usize,
    pub skeleton_pixels: usize,
    pub dangling_pixels: usize,
    pub nodes_before_pruning: usize,
    pub edges_before_pruning: usize,
    pub unmatched: usize,
    pub edges_pruned: usize,
    pub nodes_pruned: usize,
    pub unclassified: usize,
    pub decision_nodes: usize,
    pub contexts: usize,
}

#[derive(Debug, Clone)]
pub struct MapBuild {
    pub map: BehaviorMap,
    /// Preprocessed segments the map was built from, index-aligned with `matches`.
    pub segments: Vec<Trajectory>,
    pub matches: Vec<MatchedTrajectory>,
    pub diagnostics: BuildDiagnostics,
}

/// Splits at gaps, drops short pieces and recomputes kinematics.
pub fn preprocess(trajs: &[Trajectory], cfg: &PipelineConfig) -> Vec<Trajectory> {
    trajs
        .iter()
        .flat_map(|t| split_and_trim(t, cfg.preprocess.min_length_m, cfg.preprocess.max_gap_s))
        .collect()
}

pub fn build_map(trajs: &[Trajectory], cfg: &PipelineConfig) -> Result<MapBuild> {
    cfg.validate()?;
    if trajs.is_empty() {
        return Err(Error::Validation("no trajectories".into()));
    }
    let mut diag = BuildDiagnostics {
        input_trajectories: trajs.len(),
        ..Default::default()
    };
    let segments = preprocess(trajs, cfg);
    diag.segments = segments.len();
    if segments.is_empty() {
        return Err(Error::Validation("no trajectories left after preprocessing".into()).in_stage("preprocess"));
    }

    let rc = &cfg.raster;
    let geometry = GridGeometry::covering(&segments, rc.resolution_m, rc.margin_m).map_err(|e| e.in_stage("raster"))?;
    let (grid, _) = rasterize(&segments, geometry);
    let grid = morphological_denoise(&grid, &rc.passes).map_err(|e| e.in_stage("raster"))?;
    let skeleton = prune_spurs(&thin(&binarize(&grid, rc.threshold)), rc.max_spur_px);
    diag.skeleton_pixels = skeleton.count();
    if diag.skeleton_pixels == 0 {
        return Err(
            Error::Validation("empty skeleton; lower the threshold or add trajectories".into()).in_stage("raster"),
        );
    }
    debug!(
        "skeleton with {} pixels on a {}x{} grid",
        diag.skeleton_pixels,
        grid.width(),
        grid.height()
    );

    let mut trace = trace_edges(&skeleton, detect_nodes(&skeleton));
    if cfg.graph.junction_merge_px > 0 {
        trace = merge_close_junctions(&trace, cfg.graph.junction_merge_px);
    }
    diag.dangling_pixels = trace.dangling_pixels;
    let raw = build_graph(&trace, skeleton.geometry(), cfg.graph.simplify_tolerance_m);
    diag.nodes_before_pruning = raw.node_count();
    diag.edges_before_pruning = raw.edge_count();
    if raw.edge_count() == 0 {
        return Err(Error::Validation("skeleton produced no edges".into()).in_stage("graph"));
    }

    let matches = match_all(&segments, &raw, &cfg.matching);
    diag.unmatched = matches.iter().filter(|m| !m.is_matched()).count();
    if diag.unmatched == matches.len() {
        return Err(Error::Validation("no trajectory could be matched to the graph".into()).in_stage("matching"));
    }
    let (pruned, stats) = prune_unused_edges(&raw, &matches);
    diag.edges_pruned = stats.edges_removed;
    diag.nodes_pruned = stats.nodes_removed;
    let obs = TransitionObservations::from_matches(&pruned, &matches);
    let (graph, report) = classify_nodes(&pruned, &obs);
    diag.unclassified = report.unclassified.len();
    diag.decision_nodes = graph.nodes().filter(|n| n.kind == NodeKind::Decision).count();

    let map = build_behavior(&graph, &segments, &matches, &cfg.behavior).map_err(|e| e.in_stage("behavior"))?;
    diag.contexts = map.contexts.len();
    info!(
        "map: {} nodes, {} edges, {} contexts, {} unmatched of {}",
        map.graph.node_count(),
        map.graph.edge_count(),
        diag.contexts,
        diag.unmatched,
        diag.segments
    );
    Ok(MapBuild {
        map,
        segments,
        matches,
        diagnostics: diag,
    })
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
