//! Sectioned TOML run configuration shared by every command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::eval::{Heuristic, Thresholds};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Stochastic rollouts per scene.
    pub samples: usize,
    pub significance: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub heuristic: Heuristic,
    /// Penalty weights visited by the sweep.
    pub gammas: Vec<f64>,
    /// Scenes audited by the edge-ablation quality check (0 disables it).
    pub quality_scenes: usize,
    /// Scenes drawn as SVG line plots.
    pub svg_scenes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 20,
            significance: 0.05,
            theta_low: 0.2,
            theta_high: 0.8,
            heuristic: Heuristic::Entropy,
            gammas: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            quality_scenes: 10,
            svg_scenes: 3,
        }
    }
}

impl EvalConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            low: self.theta_low,
            high: self.theta_high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Config("eval.samples must be positive".into()));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::Config("eval.significance must lie in (0, 1)".into()));
        }
        if !(0.0 <= self.theta_low && self.theta_low <= self.theta_high && self.theta_high <= 1.0) {
            return Err(Error::Config("need 0 <= theta_low <= theta_high <= 1".into()));
        }
        if self.gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("sweep gammas must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Every hyperparameter, grouped as `[data]`, `[model]`, `[train]`, `[eval]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: SyntheticConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.model.num_categories != self.data.num_categories {
            return Err(Error::Config(format!(
                "model.num_categories = {} but data.num_categories = {}",
                self.model.num_categories, self.data.num_categories
            )));
        }
        if self.model.tau > self.data.history {
            return Err(Error::Config(format!(
                "model.tau = {} exceeds data.history = {}",
                self.model.tau, self.data.history
            )));
        }
        Ok(())
    }
}
