use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and sampling switches of the encoder/decoder pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of every hidden layer and recurrent state.
    pub hidden: usize,
    /// Width of the per-edge feature vectors.
    pub edge_dim: usize,
    pub gru_layers: usize,
    pub num_categories: usize,
    /// Steps per interaction window.
    pub tau: usize,
    /// Temperature of the relaxed relation samples.
    pub temperature: f64,
    /// Drop the per-category query/key/value mappings.
    pub homogeneous: bool,
    /// Add unit Gaussian noise to edge features.
    pub edge_noise: bool,
    /// Add unit Gaussian noise to the decoder state before the output head.
    pub output_noise: bool,
    /// Sample hard relations at evaluation; otherwise threshold probabilities at 1/2.
    pub relation_sampling: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            edge_dim: 128,
            gru_layers: 2,
            num_categories: 3,
            tau: 5,
            temperature: 0.5,
            homogeneous: false,
            edge_noise: true,
            output_noise: true,
            relation_sampling: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.edge_dim == 0 || self.gru_layers == 0 {
            return Err(Error::Config("hidden, edge_dim and gru_layers must be positive".into()));
        }
        if self.num_categories == 0 {
            return Err(Error::Config("num_categories must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    /// Switches off every stochastic element of evaluation.
    pub fn deterministic(mut self) -> Self {
        self.edge_noise = false;
        self.output_noise = false;
        self.relation_sampling = false;
        self
    }
}
