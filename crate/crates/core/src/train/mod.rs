//! Training strategies, the outer loop, logging and checkpoints.

pub mod schedule;

pub use schedule::{mix, sample_beta, MixState};

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Normalizer, Scene};
use crate::error::{Error, Result};
use crate::eval::metrics::evaluate_dataset;
use crate::graph::{regularized_loss, PenaltyKind};
use crate::model::{future_squared_error, truth_frames, InputPolicy, Mode, Model, RolloutOptions};
use crate::numerics::params::{read_checkpoint, write_checkpoint};
use crate::numerics::tape::BnObservation;
use crate::numerics::{Adam, AdamConfig, DArray, Graph, ParamStore, RngStream, Var};
use crate::parallel::par_map;

const SHUFFLE_STREAM: u64 = 0x5_4FF1E;
const STEP_STREAM: u64 = 0x57E9;
const LAMBDA_STREAM: u64 = 0x1A3B;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Free-running decoder, reconstruction loss only.
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "mixup")]
    Mixup,
    /// Ground truth fed at every future step.
    #[serde(rename = "TF")]
    TeacherForcing,
    /// Ground truth fed at window boundaries only.
    #[serde(rename = "TF_plus")]
    TeacherForcingPlus,
    /// Free-running with the graph penalty.
    #[serde(rename = "GE")]
    Ge,
    #[default]
    #[serde(rename = "GE_mixup")]
    GeMixup,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Plain,
        Strategy::Mixup,
        Strategy::TeacherForcing,
        Strategy::TeacherForcingPlus,
        Strategy::Ge,
        Strategy::GeMixup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Plain => "plain",
            Strategy::Mixup => "mixup",
            Strategy::TeacherForcing => "TF",
            Strategy::TeacherForcingPlus => "TF_plus",
            Strategy::Ge => "GE",
            Strategy::GeMixup => "GE_mixup",
        }
    }

    pub fn uses_mixup(self) -> bool {
        matches!(self, Strategy::Mixup | Strategy::GeMixup)
    }

    pub fn uses_penalty(self) -> bool {
        matches!(self, Strategy::Ge | Strategy::GeMixup)
    }

    /// Decoder input policy of the single-update strategies.
    pub fn policy(self) -> InputPolicy {
        match self {
            Strategy::TeacherForcing => InputPolicy::TeacherForcing,
            Strategy::TeacherForcingPlus => InputPolicy::WindowReset,
            _ => InputPolicy::FreeRun,
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}` (plain|mixup|TF|TF_plus|GE|GE_mixup)")))
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the graph penalty; only strategies with the penalty use it.
    pub gamma: f64,
    pub penalty: PenaltyKind,
    pub strategy: Strategy,
    pub alpha_init: f64,
    pub alpha_decay_interval: usize,
    pub alpha_decay_factor: f64,
    pub alpha_floor: f64,
    /// Rollouts per validation scene when scoring epochs.
    pub val_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            learning_rate: 1e-3,
            gamma: 1e-3,
            penalty: PenaltyKind::Entropy,
            strategy: Strategy::GeMixup,
            alpha_init: 10.0,
            alpha_decay_interval: 10,
            alpha_decay_factor: 0.5,
            alpha_floor: 0.1,
            val_samples: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if self.val_samples == 0 {
            return Err(Error::Config("val_samples must be positive".into()));
        }
        self.mix_state().map(|_| ())
    }

    pub fn mix_state(&self) -> Result<MixState> {
        MixState::new(self.alpha_init, self.alpha_decay_interval, self.alpha_decay_factor, self.alpha_floor)
    }

    /// `γ` actually applied by the configured strategy.
    pub fn effective_gamma(&self) -> f64 {
        if self.strategy.uses_penalty() {
            self.gamma
        } else {
            0.0
        }
    }
}

/// What one scene contributes to an optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Reconstruction (plus penalty when `gamma > 0`) under a fixed input policy.
    Standard { policy: InputPolicy, gamma: f64, penalty: PenaltyKind },
    /// First mixup update: mixed inputs at window boundaries.
    MixFirst { lambda: f64, gamma: f64, penalty: PenaltyKind },
    /// Second mixup update: pull the free rollout toward the detached mixed rollout.
    MixSecond { lambda: f64 },
}

#[derive(Clone, Debug)]
pub struct SceneGradient {
    /// Value of the optimized objective.
    pub loss: f64,
    /// Reconstruction part alone.
    pub recon: f64,
    pub grads: BTreeMap<String, DArray>,
    pub bn: Vec<BnObservation>,
}

/// Builds the objective of `scene` on a fresh tape; returns `(graph, loss, reconstruction)`.
pub fn build_objective(
    model: &Model,
    store: &ParamStore,
    scene: &Scene,
    objective: Objective,
    rng: &RngStream,
) -> Result<(Graph, Var, Var)> {
    let mut g = Graph::new();
    let (loss, recon) = objective_on(&mut g, model, store, scene, objective, rng)?;
    Ok((g, loss, recon))
}

/// Records the objective on an existing tape; returns `(loss, reconstruction)`.
pub fn objective_on(
    g: &mut Graph,
    model: &Model,
    store: &ParamStore,
    scene: &Scene,
    objective: Objective,
    rng: &RngStream,
) -> Result<(Var, Var)> {
    let truth = truth_frames(g, scene);
    let (policy, gamma, penalty) = match objective {
        Objective::Standard { policy, gamma, penalty } => (policy, gamma, penalty),
        Objective::MixFirst { lambda, gamma, penalty } => (InputPolicy::Mix(lambda), gamma, penalty),
        Objective::MixSecond { lambda } => {
            // Target: the mixed rollout under the same draws, built on its own tape so it stays detached.
            let mut tg = Graph::new();
            let opts = RolloutOptions::new(Mode::Train, InputPolicy::Mix(lambda));
            let mixed = model.rollout(&mut tg, store, scene, &opts, &mut rng.clone())?;
            let targets: Vec<Var> = (0..model.plan.total())
                .map(|t| if t < model.plan.history { truth[t] } else { g.constant(tg.value(mixed.output(t)).clone()) })
                .collect();
            let opts = RolloutOptions::new(Mode::Train, InputPolicy::FreeRun);
            let r = model.rollout(g, store, scene, &opts, &mut rng.clone())?;
            let loss = future_squared_error(g, &r, &model.plan, &targets)?;
            return Ok((loss, loss));
        }
    };
    let r = model.rollout(g, store, scene, &RolloutOptions::new(Mode::Train, policy), &mut rng.clone())?;
    let recon = future_squared_error(g, &r, &model.plan, &truth)?;
    let zs: Vec<Var> = r.inferred().map(|x| x.z).collect();
    let loss = regularized_loss(g, recon, &zs, &r.edges, gamma, penalty)?;
    Ok((loss, recon))
}

/// Loss value, parameter gradients and batch-norm statistics of one scene.
pub fn scene_gradient(
    model: &Model,
    store: &ParamStore,
    scene: &Scene,
    objective: Objective,
    rng: &RngStream,
) -> Result<SceneGradient> {
    let (mut g, loss, recon) = build_objective(model, store, scene, objective, rng)?;
    let loss_value = g.value(loss).values()[0];
    if !loss_value.is_finite() {
        return Err(Error::Numerical(format!(
            "loss became {loss_value} on scene {}; lower learning_rate",
            scene.scene_id
        )));
    }
    let recon_value = g.value(recon).values()[0];
    let grads = g.backward(loss)?.params(store);
    Ok(SceneGradient {
        loss: loss_value,
        recon: recon_value,
        grads,
        bn: g.take_bn_observations(),
    })
}

/// Averages scene gradients in scene order, takes one Adam step and folds in batch-norm statistics.
pub fn apply_batch(store: &mut ParamStore, adam: &mut Adam, results: &[SceneGradient]) -> Result<()> {
    let scale = 1.0 / results.len() as f64;
    let mut total: BTreeMap<String, DArray> = BTreeMap::new();
    for r in results {
        for (k, v) in &r.grads {
            match total.get_mut(k) {
                Some(acc) => acc.values_mut().iter_mut().zip(v.values()).for_each(|(a, b)| *a += b),
                None => {
                    total.insert(k.clone(), v.clone());
                }
            }
        }
    }
    for v in total.values_mut() {
        v.values_mut().iter_mut().for_each(|x| *x *= scale);
        if v.values().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite gradient; lower learning_rate".into()));
        }
    }
    adam.step(store, &total)?;
    for r in results {
        store.apply_bn_observations(&r.bn, crate::numerics::nn::BN_MOMENTUM);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub strategy: Strategy,
    pub train_loss: f64,
    pub val_loss: f64,
    pub l1: f64,
    pub l2: Option<f64>,
    pub entropy: f64,
    pub density: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub val_ade: f64,
}

pub const LOG_HEADER: &str = "epoch,strategy,train_loss,val_loss,L1,L2,entropy,density,alpha,gamma";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.10e},{:.10e},{:.10e},{},{:.10e},{:.10e},{},{}",
            self.epoch,
            self.strategy,
            self.train_loss,
            self.val_loss,
            self.l1,
            self.l2.map_or(String::new(), |v| format!("{v:.10e}")),
            self.entropy,
            self.density,
            self.alpha,
            self.gamma
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainData<'a> {
    pub train: &'a [Scene],
    pub val: &'a [Scene],
    pub normalizer: Normalizer,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub best_params: ParamStore,
    pub best_epoch: usize,
    pub best_val_ade: f64,
    pub log: Vec<EpochLog>,
}

/// Where training writes its artifacts.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub resume: bool,
}

impl TrainOutput {
    pub fn best(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn last(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }
}

fn meta(v: f64) -> DArray {
    DArray::scalar(v)
}

fn save_last(path: &Path, store: &ParamStore, adam: &Adam, epoch: usize, best_epoch: usize, best: f64) -> Result<()> {
    let mut records = store.to_records();
    records.extend(adam.to_records("adam."));
    records.insert("meta.epoch".into(), meta(epoch as f64));
    records.insert("meta.best_epoch".into(), meta(best_epoch as f64));
    records.insert("meta.best_val_ade".into(), meta(best));
    write_checkpoint(path, &records)
}

/// Training state recovered from a `last.ckpt`.
struct Resumed {
    store: ParamStore,
    adam: Adam,
    next_epoch: usize,
    best_epoch: usize,
    best_val_ade: f64,
}

fn load_last(path: &Path, adam_cfg: AdamConfig) -> Result<Resumed> {
    let records = read_checkpoint(path)?;
    let get = |k: &str| {
        records
            .get(k)
            .map(|v| v.values()[0])
            .ok_or_else(|| Error::MalformedData(format!("{} lacks `{k}`", path.display())))
    };
    let epoch = get("meta.epoch")? as usize;
    let best_epoch = get("meta.best_epoch")? as usize;
    let best_val_ade = get("meta.best_val_ade")?;
    let adam = Adam::from_records(adam_cfg, "adam.", &records);
    let params = records
        .into_iter()
        .filter(|(k, _)| !k.starts_with("adam.") && !k.starts_with("meta."))
        .collect();
    Ok(Resumed {
        store: ParamStore::from_records(params),
        adam,
        next_epoch: epoch + 1,
        best_epoch,
        best_val_ade,
    })
}

/// Trains `model` with `cfg.strategy`, keeping the parameters with the best validation mean ADE.
pub fn train(
    model: &Model,
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    output: Option<&TrainOutput>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::MalformedData("training and validation splits must be nonempty".into()));
    }
    let adam_cfg = AdamConfig {
        lr: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mix_state = cfg.mix_state()?;
    let gamma = cfg.effective_gamma();

    let mut store = model.init_params(cfg.seed);
    let mut adam = Adam::new(adam_cfg.clone());
    let mut start = 0;
    let mut best_epoch = 0;
    let mut best_val_ade = f64::INFINITY;
    let mut best_params = store.clone();
    let mut log = Vec::new();

    if let Some(out) = output {
        fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
        if out.resume && out.last().exists() {
            let r = load_last(&out.last(), adam_cfg)?;
            store = r.store;
            adam = r.adam;
            start = r.next_epoch;
            best_epoch = r.best_epoch;
            best_val_ade = r.best_val_ade;
            if out.best().exists() {
                best_params = ParamStore::load(out.best())?;
            }
        } else {
            fs::write(out.log(), format!("{LOG_HEADER}\n")).map_err(|e| Error::io(out.log(), e))?;
        }
    }

    for epoch in start..cfg.epochs {
        let alpha = mix_state.alpha_at(epoch);
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        RngStream::keyed(cfg.seed, &[SHUFFLE_STREAM, epoch as u64]).shuffle(&mut order);

        let (mut loss_sum, mut l1_sum, mut l2_sum) = (0.0, 0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let jobs: Vec<(usize, usize)> = chunk.iter().copied().enumerate().collect();
            let key = |pos: usize, phase: u64| {
                RngStream::keyed(cfg.seed, &[STEP_STREAM, epoch as u64, b as u64, pos as u64, phase])
            };
            if cfg.strategy.uses_mixup() {
                let lambdas: Vec<f64> = jobs
                    .iter()
                    .map(|&(pos, _)| {
                        let mut r = RngStream::keyed(cfg.seed, &[LAMBDA_STREAM, epoch as u64, b as u64, pos as u64]);
                        sample_beta(alpha, &mut r)
                    })
                    .collect::<Result<_>>()?;
                let first = par_map(jobs.clone(), |(pos, idx)| {
                    let obj = Objective::MixFirst {
                        lambda: lambdas[pos],
                        gamma,
                        penalty: cfg.penalty,
                    };
                    scene_gradient(model, &store, &data.train[idx], obj, &key(pos, 0))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                apply_batch(&mut store, &mut adam, &first)?;
                let second = par_map(jobs.clone(), |(pos, idx)| {
                    let obj = Objective::MixSecond { lambda: lambdas[pos] };
                    scene_gradient(model, &store, &data.train[idx], obj, &key(pos, 1))
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                apply_batch(&mut store, &mut adam, &second)?;
                loss_sum += first.iter().map(|r| r.loss).sum::<f64>();
                l1_sum += first.iter().map(|r| r.recon).sum::<f64>();
                l2_sum += second.iter().map(|r| r.loss).sum::<f64>();
            } else {
                let obj = Objective::Standard {
                    policy: cfg.strategy.policy(),
                    gamma,
                    penalty: cfg.penalty,
                };
                let results = par_map(jobs, |(pos, idx)| scene_gradient(model, &store, &data.train[idx], obj, &key(pos, 0)))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                apply_batch(&mut store, &mut adam, &results)?;
                loss_sum += results.iter().map(|r| r.loss).sum::<f64>();
                l1_sum += results.iter().map(|r| r.recon).sum::<f64>();
            }
        }
        let count = data.train.len() as f64;
        let (val, _) = evaluate_dataset(model, &store, &data.normalizer, data.val, cfg.val_samples, cfg.seed)?;
        let entry = EpochLog {
            epoch,
            strategy: cfg.strategy,
            train_loss: loss_sum / count,
            val_loss: val.mean_loss,
            l1: l1_sum / count,
            l2: cfg.strategy.uses_mixup().then_some(l2_sum / count),
            entropy: val.avg_entropy,
            density: val.avg_density,
            alpha,
            gamma,
            val_ade: val.overall.mean_ade,
        };
        log::info!("{}", entry.csv_row());
        if entry.val_ade < best_val_ade {
            best_val_ade = entry.val_ade;
            best_epoch = epoch;
            best_params = store.clone();
            if let Some(out) = output {
                best_params.save(out.best())?;
            }
        }
        if let Some(out) = output {
            let mut f = fs::OpenOptions::new()
                .append(true)
                .open(out.log())
                .map_err(|e| Error::io(out.log(), e))?;
            writeln!(f, "{}", entry.csv_row()).map_err(|e| Error::io(out.log(), e))?;
            save_last(&out.last(), &store, &adam, epoch, best_epoch, best_val_ade)?;
        }
        log.push(entry);
    }
    Ok(TrainOutcome {
        params: store,
        best_params,
        best_epoch,
        best_val_ade,
        log,
    })
}
