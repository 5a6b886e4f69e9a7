use crate::error::{Error, Result};
use crate::numerics::{DArray, RngStream};

/// Symmetric `Beta(α, α)` draw.
pub fn sample_beta(alpha: f64, rng: &mut RngStream) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("beta parameter must be positive, got {alpha}")));
    }
    Ok(rng.beta(alpha))
}

/// `λ · predicted + (1 - λ) · truth`, elementwise.
pub fn mix(predicted: &DArray, truth: &DArray, lambda: f64) -> Result<DArray> {
    if predicted.shape() != truth.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", predicted.shape(), truth.shape())));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!("mixing weight {lambda} outside [0, 1]")));
    }
    let v = predicted
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| lambda * p + (1.0 - lambda) * t)
        .collect();
    DArray::new(predicted.shape().to_vec(), v)
}

/// Current `α` of the mixing distribution, decayed every `interval` epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixState {
    pub alpha: f64,
    pub epoch: usize,
    pub alpha_init: f64,
    pub interval: usize,
    pub factor: f64,
    pub floor: f64,
}

impl MixState {
    pub fn new(alpha_init: f64, interval: usize, factor: f64, floor: f64) -> Result<Self> {
        if !(alpha_init > 0.0) || !(floor > 0.0) || !(factor > 0.0) || interval == 0 {
            return Err(Error::Config(
                "alpha_init, alpha_floor and alpha_decay_factor must be positive, interval nonzero".into(),
            ));
        }
        Ok(MixState {
            alpha: alpha_init.max(floor),
            epoch: 0,
            alpha_init,
            interval,
            factor,
            floor,
        })
    }

    /// `α` in effect during `epoch`.
    pub fn alpha_at(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.interval) as i32;
        (self.alpha_init * self.factor.powi(decays)).max(self.floor)
    }

    /// Moves to the next epoch.
    pub fn decay_alpha(mut self) -> Self {
        self.epoch += 1;
        self.alpha = self.alpha_at(self.epoch);
        self
    }

    pub fn at_epoch(mut self, epoch: usize) -> Self {
        self.epoch = epoch;
        self.alpha = self.alpha_at(epoch);
        self
    }
}
