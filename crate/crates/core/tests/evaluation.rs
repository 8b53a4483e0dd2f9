use std::collections::BTreeSet;

use traj_atlas::behavior::BehaviorMap;
use traj_atlas::config::PipelineConfig;
use traj_atlas::eval::{
    emit_report, evaluate_split, generate_scenario, ground_truth_window, read_report_csv, split_indices, start_indices,
    Method, ScenarioConfig,
};
use traj_atlas::io::{read_trajectories, write_trajectories};
use traj_atlas::pipeline::build_map;
use traj_atlas::predict::{PredictConfig, Predictor};

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::from_toml_str(include_str!("../../../configs/intersection.toml")).unwrap();
    cfg.scenario = ScenarioConfig {
        count: 160,
        seed: 3,
        ..cfg.scenario
    };
    cfg
}

/// Straightforward median-style quantile: sort, then interpolate between closest ranks.
fn quantile(mut xs: Vec<f64>, q: f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (xs.len() - 1) as f64;
    let i = pos as usize;
    if i + 1 >= xs.len() {
        return xs[i];
    }
    xs[i] * (1.0 - (pos - i as f64)) + xs[i + 1] * (pos - i as f64)
}

#[test]
fn report_rows_match_a_reference_loop() {
    let cfg = small_config();
    let trajs = generate_scenario(&cfg.scenario).unwrap();
    let report = evaluate_split(&trajs, &cfg).unwrap().report;
    assert_eq!(report.rows.len(), Method::ALL.len() * cfg.eval.horizons_m.len());
    for row in &report.rows {
        let mut errs = Vec::new();
        for case in &report.cases {
            for e in &case.horizons {
                if e.horizon_m != row.horizon_m {
                    continue;
                }
                let v = match row.method {
                    Method::Cyra => e.cyra,
                    _ if e.hypotheses.is_empty() => e.cyra,
                    Method::GraphTop1 => e.hypotheses[0].1,
                    Method::GraphExpected => {
                        let w: f64 = e.hypotheses.iter().map(|h| h.0).sum();
                        e.hypotheses.iter().map(|h| h.0 * h.1).sum::<f64>() / w
                    }
                };
                errs.push(v);
            }
        }
        assert_eq!(errs.len(), row.n);
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!((mean - row.mean).abs() < 1e-9, "{row:?} vs {mean}");
        for (q, got) in [(0.25, row.p25), (0.5, row.median), (0.75, row.p75)] {
            assert!((quantile(errs.clone(), q) - got).abs() < 1e-12);
        }
        assert!(row.p25 <= row.median && row.median <= row.p75);
    }
    let expected_tests: BTreeSet<&str> = report.test_ids.iter().map(String::as_str).collect();
    assert!(report
        .cases
        .iter()
        .all(|c| expected_tests.contains(c.trajectory_id.split('#').next().unwrap())));
    assert!(report.path_choice.hits <= report.path_choice.cases);
}

#[test]
fn csv_and_svg_round_trip() {
    let cfg = small_config();
    let trajs = generate_scenario(&cfg.scenario).unwrap();
    let report = evaluate_split(&trajs, &cfg).unwrap().report;
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    assert_eq!(read_report_csv(&files[0]).unwrap(), report.rows);
    let svg = std::fs::read_to_string(&files[1]).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("graph-expected") && svg.contains("cyra"));
}

#[test]
fn split_is_a_seeded_partition() {
    let (a, b) = split_indices(101, 0.8, 9);
    assert_eq!(a.len(), 81);
    let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
    assert_eq!(all.len(), 101);
    assert_eq!(split_indices(101, 0.8, 9), (a.clone(), b));
    assert_ne!(split_indices(101, 0.8, 10).0, a);
}

#[test]
fn windows_end_on_the_horizon() {
    let trajs = generate_scenario(&ScenarioConfig {
        count: 10,
        ..Default::default()
    })
    .unwrap();
    for t in &trajs {
        for s in start_indices(t, 5.0, 2.0) {
            assert!(t.points()[s].t - t.start_time() >= 2.0 - 1e-9);
            for h in [4.0, 12.5, 20.0] {
                if let Some(w) = ground_truth_window(t, s, h) {
                    assert!((w.length() - h).abs() < 1e-6, "{} vs {h}", w.length());
                    assert_eq!(w.points()[0], t.points()[s]);
                }
            }
        }
    }
}

#[test]
fn saved_map_predicts_identically() {
    let cfg = small_config();
    let trajs = generate_scenario(&cfg.scenario).unwrap();
    let built = build_map(&trajs, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.json");
    built.map.save_json(&path).unwrap();
    let loaded = BehaviorMap::load_json(&path).unwrap();
    let (a, b) = (
        Predictor::new(&built.map, PredictConfig::default()),
        Predictor::new(&loaded, PredictConfig::default()),
    );
    for t in trajs.iter().take(20) {
        let obs = t.slice(0..t.len() / 2);
        let (pa, pb) = (a.predict(&obs, 20.0).unwrap(), b.predict(&obs, 20.0).unwrap());
        assert_eq!(pa.hypotheses.len(), pb.hypotheses.len());
        for (x, y) in pa.hypotheses.iter().zip(&pb.hypotheses) {
            assert_eq!(x.edge_sequence, y.edge_sequence);
            assert!((x.probability - y.probability).abs() < 1e-12);
            for (p, q) in x.points.iter().zip(&y.points) {
                assert!(p.pos().dist(q.pos()) < 1e-6 && (p.t - q.t).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn trajectory_csv_round_trip() {
    let trajs = generate_scenario(&ScenarioConfig {
        count: 5,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    write_trajectories(&mut buf, &trajs).unwrap();
    let back = read_trajectories(buf.as_slice()).unwrap();
    assert_eq!(back.len(), trajs.len());
    for (a, b) in trajs.iter().zip(&back) {
        assert_eq!(a.id(), b.id());
        assert_eq!(a.points(), b.points());
    }
}
