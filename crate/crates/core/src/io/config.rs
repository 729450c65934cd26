use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::EvalParams;
use crate::raster::DEFAULT_THRESHOLD;
use crate::recombine::LossWeights;
use crate::synth::SynthConfig;

/// Settings shared by all subcommands; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub loss_weights: LossWeights,
    /// Binarisation threshold for merged predictions.
    pub threshold: f64,
    pub synth: SynthConfig,
    pub eval: EvalParams,
    /// Worker threads for per-image parallelism.
    pub jobs: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            loss_weights: LossWeights::default(),
            threshold: DEFAULT_THRESHOLD,
            synth: SynthConfig::default(),
            eval: EvalParams::default(),
            jobs: 1,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss_weights.validate()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        self.eval.validate()?;
        if self.jobs == 0 {
            return Err(Error::invalid("jobs must be at least 1"));
        }
        Ok(())
    }

    /// Parses a run config. A bare synthesis config (an object without a
    /// `synth` key but with `cells_per_cluster`) is accepted and wrapped.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: String::new(),
            message: e.to_string(),
        })?;
        let is_bare_synth =
            value.get("cells_per_cluster").is_some() && value.get("synth").is_none();
        let cfg = if is_bare_synth {
            let synth: SynthConfig =
                serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
                    path: e.path().to_string(),
                    message: e.inner().to_string(),
                })?;
            RunConfig {
                seed: synth.seed,
                synth,
                ..RunConfig::default()
            }
        } else {
            serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_json(&text)
}
