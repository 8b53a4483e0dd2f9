//! `traj-atlas` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use traj_atlas::behavior::BehaviorMap;
use traj_atlas::config::PipelineConfig;
use traj_atlas::eval::{emit_report, evaluate_split, generate_scenario};
use traj_atlas::io::{load_trajectories, save_trajectories};
use traj_atlas::pipeline::{build_map, with_threads, BuildDiagnostics};
use traj_atlas::predict::{hypotheses_to_json, HypothesisJson, PredictionStatus, Predictor};
use traj_atlas::Error;

/// Exit codes, one per error class.
mod exit {
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const IO: u8 = 4;
    pub const INPUT: u8 = 5;
    pub const PIPELINE: u8 = 6;
    pub const PARTIAL: u8 = 7;
}

#[derive(Parser, Debug)]
#[command(
    name = "traj-atlas",
    version,
    about = "Behavior maps and map-based trajectory prediction"
)]
struct Cli {
    /// TOML pipeline configuration; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a behavior map from a trajectory CSV.
    BuildMap(BuildMapArgs),
    /// Predict hypotheses for every trajectory in an observed-prefix CSV.
    Predict(PredictArgs),
    /// Split, build, evaluate against CYRA and write report.csv and comparison.svg.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic intersection scenario as a trajectory CSV.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct BuildMapArgs {
    #[arg(long, value_name = "FILE")]
    trajectories: PathBuf,
    /// Behavior map JSON to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write build diagnostics as JSON.
    #[arg(long, value_name = "FILE")]
    diagnostics: Option<PathBuf>,
    #[arg(long, value_name = "M")]
    resolution_m: Option<f64>,
    #[arg(long, value_name = "COUNT")]
    threshold: Option<u32>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    map: PathBuf,
    #[arg(long, value_name = "FILE")]
    observed: PathBuf,
    #[arg(long, value_name = "M")]
    horizon_m: f64,
    /// Prediction JSON to write; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    trajectories: PathBuf,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Seed of the train/test split.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "R")]
    split_ratio: Option<f64>,
    /// Evaluate on the training data itself.
    #[arg(long)]
    no_split: bool,
    /// Comma-separated horizons in meters.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    horizons_m: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_name = "N")]
    count: Option<usize>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Config(_) => exit::CONFIG,
            Error::Io { .. } => exit::IO,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => exit::INPUT,
            _ => exit::PIPELINE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Serialize)]
struct PredictionRecord {
    trajectory_id: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    hypotheses: Vec<HypothesisJson>,
}

fn load_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(n) = cli.threads {
        cfg.threads = n;
    }
    Ok(cfg)
}

fn finish(cfg: &PipelineConfig) -> CliResult<()> {
    cfg.validate()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    traj_atlas::graph::write_json(path, value)?;
    Ok(())
}

fn build_map_cmd(args: &BuildMapArgs, mut cfg: PipelineConfig) -> CliResult<u8> {
    if let Some(r) = args.resolution_m {
        cfg.raster.resolution_m = r;
    }
    if let Some(t) = args.threshold {
        cfg.raster.threshold = t;
    }
    finish(&cfg)?;
    let trajs = load_trajectories(&args.trajectories)?;
    let built = with_threads(cfg.threads, || build_map(&trajs, &cfg))??;
    built.map.save_json(&args.out)?;
    report_diagnostics(&built.diagnostics);
    if let Some(p) = &args.diagnostics {
        write_json(p, &built.diagnostics)?;
    }
    Ok(0)
}

fn report_diagnostics(d: &BuildDiagnostics) {
    info!(
        "{} segments, {} unmatched, {} edges pruned, {} decision nodes, {} contexts",
        d.segments, d.unmatched, d.edges_pruned, d.decision_nodes, d.contexts
    );
    if d.unmatched > 0 {
        warn!(
            "{} of {} segments could not be matched to the graph",
            d.unmatched, d.segments
        );
    }
}

fn predict_cmd(args: &PredictArgs, cfg: PipelineConfig) -> CliResult<u8> {
    finish(&cfg)?;
    let map = BehaviorMap::load_json(&args.map)?;
    let observed = load_trajectories(&args.observed)?;
    let predictor = Predictor::new(&map, cfg.prediction);
    let mut records = Vec::with_capacity(observed.len());
    let mut uncovered = 0;
    for t in &observed {
        let pred = predictor.predict(t, args.horizon_m)?;
        let (status, message) = match pred.status {
            PredictionStatus::Ok => ("ok", None),
            PredictionStatus::NoMapCoverage(m) => {
                uncovered += 1;
                warn!("{}: no map coverage ({m})", t.id());
                ("no_map_coverage", Some(m))
            }
        };
        records.push(PredictionRecord {
            trajectory_id: t.id().to_string(),
            status,
            message,
            hypotheses: hypotheses_to_json(&pred.hypotheses),
        });
    }
    match &args.out {
        Some(p) => write_json(p, &records)?,
        None => println!("{}", serde_json::to_string_pretty(&records).map_err(Error::from)?),
    }
    Ok(if uncovered > 0 { exit::PARTIAL } else { 0 })
}

fn evaluate_cmd(args: &EvaluateArgs, mut cfg: PipelineConfig) -> CliResult<u8> {
    if let Some(s) = args.seed {
        cfg.eval.seed = s;
    }
    if let Some(r) = args.split_ratio {
        cfg.eval.split_ratio = r;
    }
    if args.no_split {
        cfg.eval.no_split = true;
    }
    if let Some(h) = &args.horizons_m {
        cfg.eval.horizons_m = h.clone();
    }
    finish(&cfg)?;
    let trajs = load_trajectories(&args.trajectories)?;
    let outcome = with_threads(cfg.threads, || evaluate_split(&trajs, &cfg))??;
    let files = emit_report(&outcome.report, &args.out_dir)?;
    let pc = &outcome.report.path_choice;
    info!(
        "{} cases, path choice {:.3} ({} of {}), {} CYRA fallbacks",
        outcome.report.cases.len(),
        pc.rate(),
        pc.hits,
        pc.cases,
        outcome.report.fallbacks
    );
    for f in files {
        println!("{}", f.display());
    }
    Ok(0)
}

fn synth_cmd(args: &SynthArgs, mut cfg: PipelineConfig) -> CliResult<u8> {
    if let Some(n) = args.count {
        cfg.scenario.count = n;
    }
    if let Some(s) = args.seed {
        cfg.scenario.seed = s;
    }
    finish(&cfg)?;
    let trajs = generate_scenario(&cfg.scenario)?;
    save_trajectories(&args.out, &trajs)?;
    info!("wrote {} trajectories to {}", trajs.len(), args.out.display());
    Ok(0)
}

fn run(cli: &Cli) -> CliResult<u8> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::BuildMap(a) => build_map_cmd(a, cfg),
        Command::Predict(a) => predict_cmd(a, cfg),
        Command::Evaluate(a) => evaluate_cmd(a, cfg),
        Command::Synth(a) => synth_cmd(a, cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRAJ_ATLAS_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
