//! Displacement errors over stochastic rollouts.

use crate::data::{Normalizer, Scene};
use crate::error::{Error, Result};
use crate::graph::{graph_entropy, r_density};
use crate::model::{InputPolicy, Mode, Model, RolloutOptions};
use crate::numerics::{Graph, ParamStore, RngStream};
use crate::parallel::par_map;

/// Stream tag for evaluation draws, kept apart from training streams.
pub const EVAL_STREAM: u64 = 0xE7A1;

/// Average and final displacement of one agent; inputs are `[step][x, y]` over the future.
pub fn ade_fde(truth: &[[f64; 2]], predicted: &[[f64; 2]]) -> Result<(f64, f64)> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::Shape(format!(
            "{} true vs {} predicted steps",
            truth.len(),
            predicted.len()
        )));
    }
    let dists: Vec<f64> = truth
        .iter()
        .zip(predicted)
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .collect();
    let ade = dists.iter().sum::<f64>() / dists.len() as f64;
    Ok((ade, *dists.last().expect("nonempty")))
}

/// `(1 / (N T_f)) Σ_t ||X^t - X̂^t||²` over `[agent][future step]` arrays.
pub fn reconstruction_loss(truth: &[Vec<[f64; 2]>], predicted: &[Vec<[f64; 2]>]) -> Result<f64> {
    if truth.len() != predicted.len() || truth.is_empty() {
        return Err(Error::Shape("agent counts differ".into()));
    }
    let steps = truth[0].len();
    let mut total = 0.0;
    for (a, b) in truth.iter().zip(predicted) {
        if a.len() != steps || b.len() != steps {
            return Err(Error::Shape("step counts differ".into()));
        }
        for (p, q) in a.iter().zip(b) {
            total += (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        }
    }
    Ok(total / (truth.len() * steps) as f64)
}

/// One stochastic rollout of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    /// Per-agent `(ade, fde)` in source units.
    pub agents: Vec<(f64, f64)>,
    /// Future squared error in normalized units.
    pub loss: f64,
    /// Predicted future positions `[agent][step]` in source units.
    pub predicted: Vec<Vec<[f64; 2]>>,
    pub entropies: Vec<f64>,
    pub densities: Vec<f64>,
}

impl SampleOutcome {
    pub fn mean_ade(&self) -> f64 {
        self.agents.iter().map(|a| a.0).sum::<f64>() / self.agents.len() as f64
    }

    pub fn mean_fde(&self) -> f64 {
        self.agents.iter().map(|a| a.1).sum::<f64>() / self.agents.len() as f64
    }
}

/// Options controlling a free-running evaluation rollout.
#[derive(Clone, Debug)]
pub struct EvalRequest<'a> {
    pub scene: &'a Scene,
    pub scene_index: usize,
    pub sample: usize,
    pub seed: u64,
    pub relation_override: Option<Vec<Option<Vec<f64>>>>,
}

/// Future positions of `scene` as `[agent][step]` in source units.
pub fn future_truth(scene: &Scene, history: usize, normalizer: &Normalizer) -> Vec<Vec<[f64; 2]>> {
    (0..scene.num_agents())
        .map(|i| {
            (history..scene.steps())
                .map(|t| normalizer.denormalize_point(scene.position(i, t)))
                .collect()
        })
        .collect()
}

/// Runs one eval-mode free rollout and scores it.
pub fn evaluate_sample(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    req: &EvalRequest<'_>,
) -> Result<SampleOutcome> {
    let mut g = Graph::new();
    let mut rng = RngStream::keyed(req.seed, &[EVAL_STREAM, req.scene_index as u64, req.sample as u64]);
    let mut opts = RolloutOptions::new(Mode::Eval, InputPolicy::FreeRun);
    opts.relation_override = req.relation_override.clone();
    let rollout = model.rollout(&mut g, store, req.scene, &opts, &mut rng)?;
    let plan = model.plan;
    let normalized = rollout.future_positions(&g, &plan);
    let truth_norm: Vec<Vec<[f64; 2]>> = (0..req.scene.num_agents())
        .map(|i| (plan.history..plan.total()).map(|t| req.scene.position(i, t)).collect())
        .collect();
    let loss = reconstruction_loss(&truth_norm, &normalized)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite prediction for scene {}", req.scene.scene_id)));
    }
    let predicted: Vec<Vec<[f64; 2]>> = normalized
        .iter()
        .map(|row| row.iter().map(|p| normalizer.denormalize_point(*p)).collect())
        .collect();
    let truth = future_truth(req.scene, plan.history, normalizer);
    let agents = truth
        .iter()
        .zip(&predicted)
        .map(|(a, b)| ade_fde(a, b))
        .collect::<Result<Vec<_>>>()?;
    let n = req.scene.num_agents();
    let mut entropies = Vec::new();
    let mut densities = Vec::new();
    for graph in rollout.inferred() {
        let dense = rollout.edges.to_dense(g.value(graph.z).values());
        entropies.push(graph_entropy(&dense, n)?);
        densities.push(r_density(&dense, n));
    }
    Ok(SampleOutcome {
        agents,
        loss,
        predicted,
        entropies,
        densities,
    })
}

/// Min/mean summary over `K` samples, per scene or averaged over scenes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorSummary {
    pub min_ade: f64,
    pub min_fde: f64,
    pub mean_ade: f64,
    pub mean_fde: f64,
}

impl ErrorSummary {
    fn from_samples(ades: &[f64], fdes: &[f64]) -> Self {
        let k = ades.len() as f64;
        ErrorSummary {
            min_ade: ades.iter().copied().fold(f64::INFINITY, f64::min),
            min_fde: fdes.iter().copied().fold(f64::INFINITY, f64::min),
            mean_ade: ades.iter().sum::<f64>() / k,
            mean_fde: fdes.iter().sum::<f64>() / k,
        }
    }

    fn average(items: &[ErrorSummary]) -> Self {
        let k = items.len().max(1) as f64;
        ErrorSummary {
            min_ade: items.iter().map(|s| s.min_ade).sum::<f64>() / k,
            min_fde: items.iter().map(|s| s.min_fde).sum::<f64>() / k,
            mean_ade: items.iter().map(|s| s.mean_ade).sum::<f64>() / k,
            mean_fde: items.iter().map(|s| s.mean_fde).sum::<f64>() / k,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMetrics {
    pub overall: ErrorSummary,
    /// `(category, summary over that category's agents)`.
    pub per_category: Vec<(usize, ErrorSummary)>,
    pub mean_loss: f64,
    pub entropies: Vec<f64>,
    pub densities: Vec<f64>,
}

/// Summarizes `K` sample outcomes of one scene.
pub fn summarize_scene(scene: &Scene, samples: &[SampleOutcome]) -> SceneMetrics {
    let ades: Vec<f64> = samples.iter().map(SampleOutcome::mean_ade).collect();
    let fdes: Vec<f64> = samples.iter().map(SampleOutcome::mean_fde).collect();
    let mut cats: Vec<usize> = scene.categories.clone();
    cats.sort_unstable();
    cats.dedup();
    let per_category = cats
        .into_iter()
        .map(|c| {
            let rows: Vec<usize> = (0..scene.num_agents()).filter(|&i| scene.categories[i] == c).collect();
            let mean_of = |s: &SampleOutcome, pick: fn(&(f64, f64)) -> f64| {
                rows.iter().map(|&i| pick(&s.agents[i])).sum::<f64>() / rows.len() as f64
            };
            let a: Vec<f64> = samples.iter().map(|s| mean_of(s, |x| x.0)).collect();
            let f: Vec<f64> = samples.iter().map(|s| mean_of(s, |x| x.1)).collect();
            (c, ErrorSummary::from_samples(&a, &f))
        })
        .collect();
    SceneMetrics {
        overall: ErrorSummary::from_samples(&ades, &fdes),
        per_category,
        mean_loss: samples.iter().map(|s| s.loss).sum::<f64>() / samples.len() as f64,
        entropies: samples.iter().flat_map(|s| s.entropies.iter().copied()).collect(),
        densities: samples.iter().flat_map(|s| s.densities.iter().copied()).collect(),
    }
}

/// Dataset-level metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub overall: ErrorSummary,
    pub per_category: Vec<(usize, ErrorSummary)>,
    pub mean_loss: f64,
    pub avg_entropy: f64,
    pub avg_density: f64,
    pub scenes: usize,
}

pub fn aggregate(scenes: &[SceneMetrics], num_categories: usize) -> MetricsRecord {
    let overall = ErrorSummary::average(&scenes.iter().map(|s| s.overall.clone()).collect::<Vec<_>>());
    let per_category = (0..num_categories)
        .filter_map(|c| {
            let items: Vec<ErrorSummary> = scenes
                .iter()
                .filter_map(|s| s.per_category.iter().find(|(k, _)| *k == c).map(|(_, e)| e.clone()))
                .collect();
            (!items.is_empty()).then(|| (c, ErrorSummary::average(&items)))
        })
        .collect();
    let mean = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    MetricsRecord {
        overall,
        per_category,
        mean_loss: mean(scenes.iter().map(|s| s.mean_loss).collect()),
        avg_entropy: mean(scenes.iter().flat_map(|s| s.entropies.iter().copied()).collect()),
        avg_density: mean(scenes.iter().flat_map(|s| s.densities.iter().copied()).collect()),
        scenes: scenes.len(),
    }
}

/// `K` rollouts of one scene with distinct streams.
pub fn sampled_metrics(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    scene: &Scene,
    scene_index: usize,
    samples: usize,
    seed: u64,
) -> Result<SceneMetrics> {
    let outcomes = (0..samples)
        .map(|k| {
            let req = EvalRequest {
                scene,
                scene_index,
                sample: k,
                seed,
                relation_override: None,
            };
            evaluate_sample(model, store, normalizer, &req)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_scene(scene, &outcomes))
}

/// Evaluates every scene with `samples` rollouts each, parallel over (scene, sample).
pub fn evaluate_dataset(
    model: &Model,
    store: &ParamStore,
    normalizer: &Normalizer,
    scenes: &[Scene],
    samples: usize,
    seed: u64,
) -> Result<(MetricsRecord, Vec<SceneMetrics>)> {
    if samples == 0 {
        return Err(Error::Config("need at least one evaluation sample".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..scenes.len()).flat_map(|s| (0..samples).map(move |k| (s, k))).collect();
    let outcomes = par_map(jobs, |(s, k)| {
        let req = EvalRequest {
            scene: &scenes[s],
            scene_index: s,
            sample: k,
            seed,
            relation_override: None,
        };
        evaluate_sample(model, store, normalizer, &req)
    });
    let mut it = outcomes.into_iter();
    let mut per_scene = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let chunk = it.by_ref().take(samples).collect::<Result<Vec<_>>>()?;
        per_scene.push(summarize_scene(scene, &chunk));
    }
    Ok((aggregate(&per_scene, model.cfg.num_categories), per_scene))
}
