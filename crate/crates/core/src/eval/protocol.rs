//! Distance-horizon evaluation of graph-based prediction against the CYRA baseline.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::cyra::{cyra_positions, estimate_cyra_state};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, EdgeIndex};
use crate::matching::match_trajectory;
use crate::metrics::{combined_measure, MetricWeights};
use crate::model::{Trajectory, TrajectoryPoint};
use crate::pipeline::{build_map, preprocess, BuildDiagnostics, MapBuild};
use crate::predict::{PredictionHypothesis, PredictionStatus, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fraction of trajectories used to build the map.
    pub split_ratio: f64,
    /// Build the map from every trajectory and evaluate on the same set.
    pub no_split: bool,
    pub seed: u64,
    pub horizons_m: Vec<f64>,
    /// Arc-length spacing of evaluation start points along each test trajectory.
    pub start_spacing_m: f64,
    /// Observed history handed to the predictors.
    pub prefix_s: f64,
    pub cyra_fit_window_s: f64,
    /// Predictions extend this far beyond the largest horizon.
    pub prediction_margin_m: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split_ratio: 0.8,
            no_split: false,
            seed: 7,
            horizons_m: vec![4.0, 8.0, 12.0, 16.0, 20.0],
            start_spacing_m: 5.0,
            prefix_s: 2.0,
            cyra_fit_window_s: 1.0,
            prediction_margin_m: 10.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config("eval: split_ratio must be in (0, 1)".into()));
        }
        if self.horizons_m.is_empty() || self.horizons_m.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::Config("eval: horizons_m must be non-empty and positive".into()));
        }
        if self.horizons_m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("eval: horizons_m must be strictly increasing".into()));
        }
        if !(self.start_spacing_m > 0.0 && self.prefix_s > 0.0 && self.cyra_fit_window_s > 0.0) {
            return Err(Error::Config(
                "eval: start_spacing_m, prefix_s and cyra_fit_window_s must be > 0".into(),
            ));
        }
        if !(self.prediction_margin_m >= 0.0) {
            return Err(Error::Config("eval: prediction_margin_m must be >= 0".into()));
        }
        Ok(())
    }

    pub fn max_horizon(&self) -> f64 {
        self.horizons_m.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "graph-top1")]
    GraphTop1,
    #[serde(rename = "graph-expected")]
    GraphExpected,
    #[serde(rename = "cyra")]
    Cyra,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::GraphTop1, Method::GraphExpected, Method::Cyra];

    pub fn name(self) -> &'static str {
        match self {
            Method::GraphTop1 => "graph-top1",
            Method::GraphExpected => "graph-expected",
            Method::Cyra => "cyra",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Errors of one start point at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonErrors {
    pub horizon_m: f64,
    /// `(probability, combined error)` per hypothesis, in hypothesis order.
    pub hypotheses: Vec<(f64, f64)>,
    pub cyra: f64,
}

impl HorizonErrors {
    pub fn top1(&self) -> f64 {
        self.hypotheses.first().map_or(self.cyra, |h| h.1)
    }

    /// Probability-weighted error, normalized by the total probability.
    pub fn expected(&self) -> f64 {
        let total: f64 = self.hypotheses.iter().map(|h| h.0).sum();
        if self.hypotheses.is_empty() || total <= 0.0 {
            return self.cyra;
        }
        self.hypotheses.iter().map(|h| h.0 * h.1).sum::<f64>() / total
    }

    pub fn error(&self, m: Method) -> f64 {
        match m {
            Method::GraphTop1 => self.top1(),
            Method::GraphExpected => self.expected(),
            Method::Cyra => self.cyra,
        }
    }
}

/// One prediction start point on a test trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub trajectory_id: String,
    pub start_index: usize,
    /// Graph prediction unavailable; graph methods report the CYRA error.
    pub fallback: bool,
    pub top_edges: Vec<EdgeId>,
    pub hypothesis_count: usize,
    /// `None` when the test trajectory could not be matched.
    pub path_hit: Option<bool>,
    pub horizons: Vec<HorizonErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub horizon_m: f64,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathChoice {
    pub cases: usize,
    pub hits: usize,
    /// Cases with more than one hypothesis.
    pub branching_cases: usize,
    pub branching_hits: usize,
}

impl PathChoice {
    pub fn rate(&self) -> f64 {
        if self.cases == 0 {
            0.0
        } else {
            self.hits as f64 / self.cases as f64
        }
    }

    pub fn branching_rate(&self) -> f64 {
        if self.branching_cases == 0 {
            0.0
        } else {
            self.branching_hits as f64 / self.branching_cases as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub cases: Vec<CaseResult>,
    pub path_choice: PathChoice,
    pub fallbacks: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl EvalReport {
    pub fn row(&self, method: Method, horizon_m: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.horizon_m == horizon_m)
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub build: BuildDiagnostics,
}

/// Percentile with linear interpolation between order statistics; `sorted` must be ascending.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty set");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Seeded train/test partition of trajectory indices, each side in input order.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = if n < 2 {
        n
    } else {
        ((n as f64 * ratio).round() as usize).clamp(1, n - 1)
    };
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Sample indices where predictions start: the first sample past each multiple of
/// `spacing_m` along the path that has `prefix_s` of history behind it.
pub fn start_indices(traj: &Trajectory, spacing_m: f64, prefix_s: f64) -> Vec<usize> {
    let arc = traj.arc_lengths();
    let t0 = traj.start_time();
    let mut out = Vec::new();
    let mut next = spacing_m;
    for (i, p) in traj.points().iter().enumerate() {
        if arc[i] + 1e-12 < next {
            continue;
        }
        while next <= arc[i] + 1e-12 {
            next += spacing_m;
        }
        if p.t - t0 >= prefix_s - 1e-9 {
            out.push(i);
        }
    }
    out
}

/// Ground truth from sample `start` until `horizon_m` of arc length, the last point
/// interpolated onto the horizon. `None` when the trajectory ends first.
pub fn ground_truth_window(traj: &Trajectory, start: usize, horizon_m: f64) -> Option<Trajectory> {
    let pts = traj.points();
    let arc = traj.arc_lengths();
    let s0 = arc[start];
    if arc[arc.len() - 1] - s0 < horizon_m - 1e-9 {
        return None;
    }
    let mut out = vec![pts[start]];
    for j in start + 1..pts.len() {
        let s = arc[j] - s0;
        if s <= horizon_m + 1e-9 {
            out.push(pts[j]);
            continue;
        }
        let prev = arc[j - 1] - s0;
        let u = (horizon_m - prev) / (s - prev);
        let p = pts[j - 1].pos().lerp(pts[j].pos(), u);
        let t = pts[j - 1].t + (pts[j].t - pts[j - 1].t) * u;
        if t > out.last().unwrap().t + 1e-9 && (horizon_m - prev) > 1e-9 {
            out.push(TrajectoryPoint::new(t, p.x, p.y));
        }
        break;
    }
    if out.len() < 2 {
        return None;
    }
    Trajectory::new(traj.id(), out).ok()
}

/// Prediction sampled at the ground-truth timestamps after the start, held at its last
/// position once it runs out.
pub fn sample_at(pred: &Trajectory, gt: &Trajectory) -> Result<Trajectory> {
    let pts = gt.points()[1..]
        .iter()
        .map(|g| {
            let p = pred.position_at_clamped(g.t);
            TrajectoryPoint::new(g.t, p.x, p.y)
        })
        .collect();
    Trajectory::new(pred.id(), pts)
}

/// Combined error of a prediction against the ground-truth window.
pub fn case_error(pred: &Trajectory, gt: &Trajectory, w: &MetricWeights) -> Result<f64> {
    Ok(combined_measure(&sample_at(pred, gt)?, gt, w)?.combined)
}

/// True when `hyp` runs along `truth`: its first edge occurs in `truth` and the following
/// edges agree for as long as both sequences go on.
pub fn on_ground_truth(hyp: &[EdgeId], truth: &[EdgeId]) -> bool {
    let Some(&first) = hyp.first() else {
        return false;
    };
    truth
        .iter()
        .enumerate()
        .filter(|(_, &e)| e == first)
        .any(|(k, _)| hyp.iter().zip(&truth[k..]).all(|(a, b)| a == b))
}

fn hypothesis_trajectory(h: &PredictionHypothesis) -> Result<Trajectory> {
    h.to_trajectory("hypothesis")
}

fn evaluate_trajectory(
    traj: &Trajectory,
    built: &MapBuild,
    predictor: &Predictor<'_>,
    index: &EdgeIndex,
    cfg: &PipelineConfig,
) -> Vec<CaseResult> {
    let ec = &cfg.eval;
    let truth = match_trajectory(traj, &built.map.graph, index, &cfg.matching);
    let truth = truth.is_matched().then_some(truth.edges);
    let mut cases = Vec::new();
    for start in start_indices(traj, ec.start_spacing_m, ec.prefix_s) {
        let t_start = traj.points()[start].t;
        let first = traj
            .points()
            .iter()
            .position(|p| p.t >= t_start - ec.prefix_s - 1e-9)
            .unwrap();
        let observed = traj.slice(first..start + 1);
        let windows: Vec<(f64, Trajectory)> = ec
            .horizons_m
            .iter()
            .filter_map(|&h| ground_truth_window(traj, start, h).map(|g| (h, g)))
            .collect();
        if windows.is_empty() || observed.len() < 2 {
            continue;
        }
        let Ok(state) = estimate_cyra_state(&observed, ec.cyra_fit_window_s) else {
            continue;
        };
        let hyps = match predictor.predict(&observed, ec.max_horizon() + ec.prediction_margin_m) {
            Ok(p) if p.status == PredictionStatus::Ok => p.hypotheses,
            _ => Vec::new(),
        };
        let hyp_trajs: Vec<Trajectory> = hyps.iter().filter_map(|h| hypothesis_trajectory(h).ok()).collect();
        let usable = hyp_trajs.len() == hyps.len() && !hyps.is_empty();
        let mut horizons = Vec::new();
        for (h, gt) in &windows {
            let times: Vec<f64> = gt.points()[1..].iter().map(|p| p.t).collect();
            let cyra_pts: Vec<TrajectoryPoint> = cyra_positions(&state, t_start, &times)
                .into_iter()
                .zip(&times)
                .map(|(p, &t)| TrajectoryPoint::new(t, p.x, p.y))
                .collect();
            let Ok(cyra_traj) = Trajectory::new("cyra", cyra_pts) else {
                continue;
            };
            let Ok(cyra) = combined_measure(&cyra_traj, gt, &cfg.metrics).map(|b| b.combined) else {
                continue;
            };
            let hypotheses = if usable {
                hyps.iter()
                    .zip(&hyp_trajs)
                    .filter_map(|(hy, t)| case_error(t, gt, &cfg.metrics).ok().map(|e| (hy.probability, e)))
                    .collect()
            } else {
                Vec::new()
            };
            horizons.push(HorizonErrors {
                horizon_m: *h,
                hypotheses,
                cyra,
            });
        }
        if horizons.is_empty() {
            continue;
        }
        let top_edges = if usable {
            hyps[0].edge_sequence.clone()
        } else {
            Vec::new()
        };
        let path_hit = match (&truth, usable) {
            (Some(t), true) => Some(on_ground_truth(&top_edges, t)),
            _ => None,
        };
        cases.push(CaseResult {
            trajectory_id: traj.id().to_string(),
            start_index: start,
            fallback: !usable,
            top_edges,
            hypothesis_count: hyps.len(),
            path_hit,
            horizons,
        });
    }
    cases
}

/// Aggregates per-case errors into one row per method and horizon.
pub fn aggregate(cases: &[CaseResult], horizons_m: &[f64]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for method in Method::ALL {
        for &h in horizons_m {
            let mut errs: Vec<f64> = cases
                .iter()
                .flat_map(|c| c.horizons.iter().filter(|e| e.horizon_m == h))
                .map(|e| e.error(method))
                .collect();
            if errs.is_empty() {
                continue;
            }
            errs.sort_by(f64::total_cmp);
            rows.push(ReportRow {
                method,
                horizon_m: h,
                n: errs.len(),
                mean: errs.iter().sum::<f64>() / errs.len() as f64,
                median: percentile(&errs, 0.5),
                p25: percentile(&errs, 0.25),
                p75: percentile(&errs, 0.75),
            });
        }
    }
    rows
}

/// Builds the map from the training part and evaluates on the rest (or on everything with
/// `no_split`).
pub fn evaluate_split(trajs: &[Trajectory], cfg: &PipelineConfig) -> Result<EvalOutcome> {
    cfg.validate()?;
    if trajs.len() < 2 && !cfg.eval.no_split {
        return Err(Error::Validation("need at least 2 trajectories to split".into()));
    }
    let (train_idx, test_idx) = if cfg.eval.no_split {
        ((0..trajs.len()).collect(), (0..trajs.len()).collect())
    } else {
        split_indices(trajs.len(), cfg.eval.split_ratio, cfg.eval.seed)
    };
    let train: Vec<Trajectory> = train_idx.iter().map(|&i| trajs[i].clone()).collect();
    let test_raw: Vec<Trajectory> = test_idx.iter().map(|&i| trajs[i].clone()).collect();
    let built = build_map(&train, cfg)?;
    let test = preprocess(&test_raw, cfg);
    let predictor = Predictor::new(&built.map, cfg.prediction);
    let index = EdgeIndex::new(&built.map.graph, (2.0 * cfg.matching.max_snap_m).max(1.0));
    let cases: Vec<CaseResult> = test
        .par_iter()
        .map(|t| evaluate_trajectory(t, &built, &predictor, &index, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if cases.is_empty() {
        return Err(
            Error::Validation("no evaluation cases; test trajectories too short for the horizons".into())
                .in_stage("evaluate"),
        );
    }
    let mut path_choice = PathChoice::default();
    for c in &cases {
        if let Some(hit) = c.path_hit {
            path_choice.cases += 1;
            path_choice.hits += hit as usize;
            if c.hypothesis_count > 1 {
                path_choice.branching_cases += 1;
                path_choice.branching_hits += hit as usize;
            }
        }
    }
    let report = EvalReport {
        rows: aggregate(&cases, &cfg.eval.horizons_m),
        fallbacks: cases.iter().filter(|c| c.fallback).count(),
        path_choice,
        cases,
        train_ids: train.iter().map(|t| t.id().to_string()).collect(),
        test_ids: test_raw.iter().map(|t| t.id().to_string()).collect(),
    };
    Ok(EvalOutcome {
        report,
        build: built.diagnostics,
    })
}
