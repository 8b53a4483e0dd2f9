use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use traj_atlas::behavior::BehaviorMap;
use traj_atlas::config::PipelineConfig;
use traj_atlas::eval::{emit_report, evaluate_split, generate_scenario};
use traj_atlas::io::{load_trajectories, save_trajectories};
use traj_atlas::metrics::{combined_measure, MetricWeights};
use traj_atlas::pipeline::build_map as build;
use traj_atlas::predict::{blend, PredictConfig, PredictionStatus, Predictor};
use traj_atlas::{Error, Trajectory, TrajectoryPoint};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.root() {
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::Config(_) | Error::Validation(_) | Error::Parse { .. } => PyValueError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn config(path: Option<&str>) -> PyResult<PipelineConfig> {
    path.map_or_else(
        || Ok(PipelineConfig::default()),
        |p| PipelineConfig::load(p).map_err(to_py),
    )
}

fn trajectory(id: &str, points: Vec<(f64, f64, f64)>) -> PyResult<Trajectory> {
    let pts = points
        .into_iter()
        .map(|(t, x, y)| TrajectoryPoint::new(t, x, y))
        .collect();
    Trajectory::new(id, pts).map_err(to_py)
}

/// One predicted future: probability, traversed edge ids and `(t, x, y)` samples.
#[pyclass(frozen, get_all)]
struct Hypothesis {
    probability: f64,
    edges: Vec<u32>,
    points: Vec<(f64, f64, f64)>,
}

#[pymethods]
impl Hypothesis {
    fn __repr__(&self) -> String {
        format!(
            "Hypothesis(p={:.4}, edges={:?}, {} points)",
            self.probability,
            self.edges,
            self.points.len()
        )
    }
}

/// Writes a synthetic intersection scenario to `out` and returns the trajectory count.
#[pyfunction]
#[pyo3(signature = (out, count=None, seed=None, config_path=None))]
fn synth(out: &str, count: Option<usize>, seed: Option<u64>, config_path: Option<&str>) -> PyResult<usize> {
    let mut cfg = config(config_path)?;
    if let Some(n) = count {
        cfg.scenario.count = n;
    }
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    let trajs = generate_scenario(&cfg.scenario).map_err(to_py)?;
    save_trajectories(out, &trajs).map_err(to_py)?;
    Ok(trajs.len())
}

/// Builds a behavior map from a trajectory CSV, writes it as JSON and returns
/// `(nodes, edges, decision_nodes)`.
#[pyfunction]
#[pyo3(signature = (trajectories, out, config_path=None))]
fn build_map(
    py: Python<'_>,
    trajectories: &str,
    out: &str,
    config_path: Option<&str>,
) -> PyResult<(usize, usize, usize)> {
    let cfg = config(config_path)?;
    let trajs = load_trajectories(trajectories).map_err(to_py)?;
    let built = py.detach(|| build(&trajs, &cfg)).map_err(to_py)?;
    built.map.save_json(out).map_err(to_py)?;
    Ok((
        built.map.graph.node_count(),
        built.map.graph.edge_count(),
        built.diagnostics.decision_nodes,
    ))
}

/// Hypotheses for one observed prefix given as `(t, x, y)` samples. Empty when the vehicle is
/// off the map.
#[pyfunction]
fn predict(map_path: &str, observed: Vec<(f64, f64, f64)>, horizon_m: f64) -> PyResult<Vec<Hypothesis>> {
    let map = BehaviorMap::load_json(map_path).map_err(to_py)?;
    let obs = trajectory("observed", observed)?;
    let pred = Predictor::new(&map, PredictConfig::default())
        .predict(&obs, horizon_m)
        .map_err(to_py)?;
    if let PredictionStatus::NoMapCoverage(_) = pred.status {
        return Ok(Vec::new());
    }
    Ok(pred
        .hypotheses
        .into_iter()
        .map(|h| Hypothesis {
            probability: h.probability,
            edges: h.edge_sequence.iter().map(|e| e.0).collect(),
            points: h.points.iter().map(|p| (p.t, p.x, p.y)).collect(),
        })
        .collect())
}

/// Runs the split evaluation and writes `report.csv` and `comparison.svg` into `out_dir`.
/// Returns `(method, horizon_m, mean)` per report row.
#[pyfunction]
#[pyo3(signature = (trajectories, out_dir, config_path=None, seed=None))]
fn evaluate(
    py: Python<'_>,
    trajectories: &str,
    out_dir: &str,
    config_path: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Vec<(String, f64, f64)>> {
    let mut cfg = config(config_path)?;
    if let Some(s) = seed {
        cfg.eval.seed = s;
    }
    let trajs = load_trajectories(trajectories).map_err(to_py)?;
    let outcome = py.detach(|| evaluate_split(&trajs, &cfg)).map_err(to_py)?;
    emit_report(&outcome.report, out_dir.as_ref()).map_err(to_py)?;
    Ok(outcome
        .report
        .rows
        .iter()
        .map(|r| (r.method.name().to_string(), r.horizon_m, r.mean))
        .collect())
}

/// Probability blended between the two clusters around `v_m`.
#[pyfunction]
fn blend_probability(v_m: f64, v_slow: f64, v_fast: f64, p_slow: f64, p_fast: f64) -> f64 {
    blend(v_m, v_slow, v_fast, p_slow, p_fast).3
}

/// Default combined similarity (0.5 MEDT + 0.5 MEDP) between two `(t, x, y)` sequences.
#[pyfunction]
fn similarity(pred: Vec<(f64, f64, f64)>, truth: Vec<(f64, f64, f64)>) -> PyResult<f64> {
    let (p, t) = (trajectory("pred", pred)?, trajectory("truth", truth)?);
    Ok(combined_measure(&p, &t, &MetricWeights::default())
        .map_err(to_py)?
        .combined)
}

#[pymodule]
fn traj_atlas_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Hypothesis>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(build_map, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(blend_probability, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    Ok(())
}
