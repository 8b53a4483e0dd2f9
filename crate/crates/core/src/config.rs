//! Whole-pipeline configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behavior::BehaviorConfig;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, ScenarioConfig};
use crate::matching::MatchConfig;
use crate::metrics::MetricWeights;
use crate::predict::PredictConfig;
use crate::raster::MorphPass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub min_length_m: f64,
    pub max_gap_s: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            min_length_m: 4.0,
            max_gap_s: 1.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_length_m > 0.0 && self.max_gap_s > 0.0) {
            return Err(Error::Config(
                "preprocess: min_length_m and max_gap_s must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub resolution_m: f64,
    /// Border added around the trajectory bounding box.
    pub margin_m: f64,
    pub passes: Vec<MorphPass>,
    pub threshold: u32,
    pub max_spur_px: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            resolution_m: 0.25,
            margin_m: 2.0,
            passes: vec![MorphPass::open(1), MorphPass::close(1), MorphPass::open(2)],
            threshold: 2,
            max_spur_px: 8,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_m > 0.0 && self.margin_m >= 0.0) {
            return Err(Error::Config(
                "raster: resolution_m must be > 0 and margin_m >= 0".into(),
            ));
        }
        if self.passes.iter().any(|p| p.radius_px == 0) {
            return Err(Error::Config("raster: morphology radius must be >= 1".into()));
        }
        if self.threshold == 0 {
            return Err(Error::Config("raster: threshold must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub simplify_tolerance_m: f64,
    /// Junctions joined by a path of at most this many interior pixels become one node;
    /// 0 disables merging.
    pub junction_merge_px: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            simplify_tolerance_m: 0.3,
            junction_merge_px: 6,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.simplify_tolerance_m >= 0.0) {
            return Err(Error::Config("graph: simplify_tolerance_m must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub preprocess: PreprocessConfig,
    pub raster: RasterConfig,
    pub graph: GraphConfig,
    pub matching: MatchConfig,
    pub behavior: BehaviorConfig,
    pub prediction: PredictConfig,
    pub metrics: MetricWeights,
    pub eval: EvalConfig,
    pub scenario: ScenarioConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.raster.validate()?;
        self.graph.validate()?;
        self.matching.validate()?;
        self.behavior.validate()?;
        self.prediction.validate()?;
        self.metrics.validate()?;
        self.eval.validate()?;
        self.scenario.validate()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_partial() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        let part = PipelineConfig::from_toml_str("threads = 2\n[raster]\nthreshold = 3\n").unwrap();
        assert_eq!(part.raster.threshold, 3);
        assert_eq!(part.raster.resolution_m, 0.25);
        assert_eq!(part.threads, 2);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("[raster]\nresolution_m = 0.0\n").is_err());
        assert!(PipelineConfig::from_toml_str("[raster]\nbogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml_str("[metrics]\nmedt = -1.0\n").is_err());
        assert!(PipelineConfig::from_toml_str("[[raster.passes]]\nop = \"open\"\nradius_px = 0\n").is_err());
    }
}
