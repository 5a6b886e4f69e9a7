//! Redundant and missing edge audit by edge ablation.

use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::{evaluate_sample, EvalRequest};
use crate::data::{Normalizer, Scene};
use crate::error::{Error, Result};
use crate::model::{InputPolicy, Mode, Model, RolloutOptions};
use crate::numerics::{Graph, ParamStore, RngStream};
use crate::parallel::par_map;

use super::metrics::EVAL_STREAM;

/// One-sided Mann-Whitney U test with normal approximation and tie correction.
///
/// Returns the p-value for the alternative "`x` tends to exceed `y`".
pub fn mann_whitney_greater(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Contract("Mann-Whitney needs two nonempty samples".into()));
    }
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_x = 0.0;
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < all.len() {
        let run = all[k..].iter().take_while(|e| e.0 == all[k].0).count();
        let avg = k as f64 + (run as f64 + 1.0) / 2.0;
        rank_x += avg * all[k..k + run].iter().filter(|e| e.1).count() as f64;
        tie_term += (run as f64).powi(3) - run as f64;
        k += run;
    }
    let u = rank_x - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        // Every value tied: no evidence either way.
        return Ok(1.0);
    }
    let z = (u - mean - 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(1.0 - normal.cdf(z))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityConfig {
    pub significance: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            significance: 0.05,
            samples: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QualityReport {
    /// Inferred edges over audited scenes.
    pub inferred: usize,
    pub redundant: usize,
    pub missing: usize,
    pub scenes_audited: usize,
    pub scenes_skipped: usize,
}

impl QualityReport {
    fn denominator(&self) -> usize {
        self.inferred - self.redundant + self.missing
    }

    fn rate(&self, count: usize) -> f64 {
        match (self.denominator(), count) {
            (0, 0) => 0.0,
            // Edges were found but none is useful.
            (0, _) => f64::INFINITY,
            (d, c) => c as f64 / d as f64,
        }
    }

    /// `E1 / (E - E1 + E2)`; infinite when every inferred edge is redundant.
    pub fn redundant_rate(&self) -> f64 {
        self.rate(self.redundant)
    }

    /// `E2 / (E - E1 + E2)`.
    pub fn missing_rate(&self) -> f64 {
        self.rate(self.missing)
    }
}

/// The hard graph audited for a scene: the first window's eval-mode draw on the base sample stream.
pub fn audited_graph(model: &Model, store: &ParamStore, scene: &Scene, scene_index: usize, seed: u64) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let mut rng = RngStream::keyed(seed, &[EVAL_STREAM, scene_index as u64, 0]);
    let r = model.rollout(
        &mut g,
        store,
        scene,
        &RolloutOptions::new(Mode::Eval, InputPolicy::FreeRun),
        &mut rng,
    )?;
    let first = r.inferred().next().ok_or_else(|| Error::Contract("rollout inferred no graph".into()))?;
    Ok(g.value(first.z).values().to_vec())
}

fn ade_samples(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    scene: &Scene,
    scene_index: usize,
    z: &[f64],
    cfg: &QualityConfig,
) -> Result<Vec<f64>> {
    let windows = model.plan.windows;
    (0..cfg.samples)
        .map(|k| {
            let req = EvalRequest {
                scene,
                scene_index,
                sample: k,
                seed: cfg.seed,
                relation_override: Some(vec![Some(z.to_vec()); windows]),
            };
            evaluate_sample(model, store, normalizer, &req).map(|o| o.mean_ade())
        })
        .collect()
}

/// Per-scene edge counts `(inferred, redundant, missing)`, or `None` when the graph is empty.
pub fn audit_scene(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    scene: &Scene,
    scene_index: usize,
    cfg: &QualityConfig,
) -> Result<Option<(usize, usize, usize)>> {
    let z = audited_graph(model, store, scene, scene_index, cfg.seed)?;
    let inferred = z.iter().filter(|v| **v > 0.5).count();
    if inferred == 0 {
        return Ok(None);
    }
    // Same sample streams for every variant, so differences come from the edge alone.
    let base = ade_samples(model, store, normalizer, scene, scene_index, &z, cfg)?;
    let (mut redundant, mut missing) = (0, 0);
    for e in 0..z.len() {
        let mut variant = z.clone();
        variant[e] = if z[e] > 0.5 { 0.0 } else { 1.0 };
        let ades = ade_samples(model, store, normalizer, scene, scene_index, &variant, cfg)?;
        if z[e] > 0.5 {
            // Removing a needed edge should raise the error.
            if mann_whitney_greater(&ades, &base)? >= cfg.significance {
                redundant += 1;
            }
        } else if mann_whitney_greater(&base, &ades)? < cfg.significance {
            missing += 1;
        }
    }
    Ok(Some((inferred, redundant, missing)))
}

/// Redundant and missing edge counts summed over `scenes`.
pub fn graph_quality(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    scenes: &[Scene],
    cfg: &QualityConfig,
) -> Result<QualityReport> {
    if cfg.samples == 0 || !(cfg.significance > 0.0 && cfg.significance < 1.0) {
        return Err(Error::Config("quality audit needs samples > 0 and significance in (0, 1)".into()));
    }
    let jobs: Vec<usize> = (0..scenes.len()).collect();
    let results = par_map(jobs, |s| audit_scene(model, store, normalizer, &scenes[s], s, cfg));
    let mut report = QualityReport::default();
    for r in results {
        match r? {
            Some((e, e1, e2)) => {
                report.inferred += e;
                report.redundant += e1;
                report.missing += e2;
                report.scenes_audited += 1;
            }
            None => report.scenes_skipped += 1,
        }
    }
    Ok(report)
}
