use std::collections::BTreeMap;

use super::array::DArray;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments, one buffer pair per trainable key.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Every trainable key of `params` needs a gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, DArray>) -> Result<()> {
        let keys: Vec<String> = params.trainable().map(|(k, _)| k.to_string()).collect();
        for key in &keys {
            let g = grads
                .get(key)
                .ok_or_else(|| Error::Contract(format!("no gradient for `{key}`")))?;
            if g.len() != params.get(key).map_or(0, DArray::len) {
                return Err(Error::Shape(format!("gradient for `{key}` has wrong size")));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for key in keys {
            let g = grads[&key].values();
            let p = params.get_mut(&key).expect("key listed above");
            let m = self
                .first
                .entry(key.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self.second.entry(key).or_insert_with(|| vec![0.0; g.len()]);
            for (((pi, gi), mi), vi) in p.values_mut().iter_mut().zip(g).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *pi -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers and step counter as checkpoint records under `prefix`.
    pub fn to_records(&self, prefix: &str) -> BTreeMap<String, DArray> {
        let mut out = BTreeMap::new();
        for (name, map) in [("m", &self.first), ("v", &self.second)] {
            for (k, vals) in map {
                out.insert(
                    format!("{prefix}{name}.{k}"),
                    DArray::new(vec![vals.len()], vals.clone()).expect("vector"),
                );
            }
        }
        out.insert(format!("{prefix}step"), DArray::scalar(self.step as f64));
        out
    }

    pub fn from_records(config: AdamConfig, prefix: &str, records: &BTreeMap<String, DArray>) -> Self {
        let mut adam = Adam::new(config);
        for (k, v) in records {
            let Some(rest) = k.strip_prefix(prefix) else { continue };
            if let Some(key) = rest.strip_prefix("m.") {
                adam.first.insert(key.to_string(), v.values().to_vec());
            } else if let Some(key) = rest.strip_prefix("v.") {
                adam.second.insert(key.to_string(), v.values().to_vec());
            } else if rest == "step" {
                adam.step = v.values()[0] as u64;
            }
        }
        adam
    }
}
