//! Synthetic scenarios, the distance-horizon evaluation protocol and report output.

pub mod protocol;
pub mod report;
pub mod scenario;

pub use protocol::{
    aggregate, evaluate_split, ground_truth_window, percentile, sample_at, split_indices, start_indices, CaseResult,
    EvalConfig, EvalOutcome, EvalReport, HorizonErrors, Method, PathChoice, ReportRow,
};
pub use report::{emit_report, read_report_csv, render_svg, write_report_csv};
pub use scenario::{
    generate_labeled, generate_scenario, LabeledTrajectory, Maneuver, ManeuverKind, ManeuverWeights, ReferencePath,
    ScenarioConfig,
};
