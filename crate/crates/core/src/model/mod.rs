//! Encoder/decoder model and scene rollouts.

pub mod config;
pub mod decoder;
pub mod encoder;

pub use config::ModelConfig;
pub use decoder::{AttentionGraph, CategoryGroups, Decoder, DecoderState};
pub use encoder::{sample_edge_features, sample_relations, Encoder, RelationMode};

use crate::data::{plan_windows, Scene, WindowPlan};
use crate::error::{Error, Result};
use crate::graph::EdgeIndex;
use crate::numerics::tape::sigmoid;
use crate::numerics::{DArray, Graph, ParamStore, RngStream, Var};

/// Train mode: relaxed relations, batch statistics, graphs inferred from ground truth.
/// Eval mode: hard relations, running statistics, graphs inferred from what the
/// model has seen or predicted so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What the decoder consumes at future steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputPolicy {
    /// Its own previous prediction.
    FreeRun,
    /// The ground truth at every step.
    TeacherForcing,
    /// The ground truth at window boundaries, its own predictions inside windows.
    WindowReset,
    /// At window boundaries `λ · stopgrad(prediction) + (1 - λ) · truth`.
    Mix(f64),
}

#[derive(Clone, Debug)]
pub struct RolloutOptions {
    pub mode: Mode,
    pub policy: InputPolicy,
    /// Replacement relation values per graph index (one value per ordered pair).
    pub relation_override: Option<Vec<Option<Vec<f64>>>>,
}

impl RolloutOptions {
    pub fn new(mode: Mode, policy: InputPolicy) -> Self {
        RolloutOptions {
            mode,
            policy,
            relation_override: None,
        }
    }

    pub fn with_relations(mut self, relations: Vec<Option<Vec<f64>>>) -> Self {
        self.relation_override = Some(relations);
        self
    }
}

/// One window's inferred interaction graph.
#[derive(Clone, Debug)]
pub struct InferredGraph {
    pub logits: Var,
    /// Edge probabilities `σ(logit)` per ordered pair.
    pub probs: Vec<f64>,
    /// Relation values actually used (relaxed in train mode, `{0, 1}` in eval mode).
    pub z: Var,
    pub features: Var,
}

#[derive(Clone, Debug)]
pub struct Rollout {
    pub edges: EdgeIndex,
    /// `outputs[s - 1]` is the `[N, 2]` prediction of step `s`, for `s` in `1..T`.
    pub outputs: Vec<Var>,
    /// Graphs by window index; only the windows a rollout needed are present.
    pub graphs: Vec<Option<InferredGraph>>,
}

impl Rollout {
    pub fn output(&self, step: usize) -> Var {
        self.outputs[step - 1]
    }

    pub fn inferred(&self) -> impl Iterator<Item = &InferredGraph> {
        self.graphs.iter().flatten()
    }

    /// Predicted positions `[agent][future step]`.
    pub fn future_positions(&self, g: &Graph, plan: &WindowPlan) -> Vec<Vec<[f64; 2]>> {
        let n = self.edges.num_nodes();
        let mut out = vec![Vec::with_capacity(plan.future); n];
        for s in plan.history..plan.total() {
            let v = g.value(self.output(s)).values();
            for (i, row) in out.iter_mut().enumerate() {
                row.push([v[2 * i], v[2 * i + 1]]);
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub plan: WindowPlan,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Model {
    pub fn new(cfg: ModelConfig, history: usize, future: usize) -> Result<Self> {
        cfg.validate()?;
        let plan = plan_windows(history, future, cfg.tau)?;
        Ok(Model {
            encoder: Encoder::new(&cfg),
            decoder: Decoder::new(&cfg),
            cfg,
            plan,
        })
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = RngStream::keyed(seed, &[0x1A17]);
        self.encoder.init(&mut store, &mut rng);
        self.decoder.init(&mut store, &mut rng);
        store
    }

    fn check_scene(&self, scene: &Scene) -> Result<()> {
        if scene.steps() != self.plan.total() {
            return Err(Error::Contract(format!(
                "scene {} has {} steps, model expects {}",
                scene.scene_id,
                scene.steps(),
                self.plan.total()
            )));
        }
        Ok(())
    }

    /// `[N, 2 tau]` positions of window `m` from `source(agent, step)`.
    fn window_input(&self, g: &mut Graph, n: usize, m: usize, source: impl Fn(usize, usize) -> [f64; 2]) -> Result<Var> {
        let (a, b) = self.plan.span(m);
        let mut vals = Vec::with_capacity(n * 2 * self.cfg.tau);
        for i in 0..n {
            for t in a..b {
                vals.extend_from_slice(&source(i, t));
            }
        }
        Ok(g.constant(DArray::new(vec![n, 2 * self.cfg.tau], vals)?))
    }

    /// Runs the encoder on one window, advancing the edge recurrent state.
    #[allow(clippy::too_many_arguments)]
    pub fn infer_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        window: Var,
        edges: &EdgeIndex,
        state: &mut Vec<Var>,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<InferredGraph> {
        let train = mode == Mode::Train;
        let nodes = self.encoder.embed_window(g, store, window, train)?;
        let emb = self.encoder.gnn_pass(g, store, nodes, edges, train)?;
        let (logits, next) = self.encoder.update_relations(g, store, emb.edges, state, train)?;
        *state = next;
        let features = sample_edge_features(g, emb.edges, self.cfg.edge_noise, rng)?;
        let relation_mode = match mode {
            Mode::Train => RelationMode::Relaxed,
            Mode::Eval if self.cfg.relation_sampling => RelationMode::Hard,
            Mode::Eval => RelationMode::Threshold,
        };
        let z = sample_relations(g, logits, self.cfg.temperature, relation_mode, rng)?;
        let probs = g.value(logits).values().iter().map(|&l| sigmoid(l)).collect();
        Ok(InferredGraph {
            logits,
            probs,
            z,
            features,
        })
    }

    /// Decodes a whole scene. History steps always consume the ground truth.
    pub fn rollout(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        scene: &Scene,
        opts: &RolloutOptions,
        rng: &mut RngStream,
    ) -> Result<Rollout> {
        self.check_scene(scene)?;
        let n = scene.num_agents();
        let plan = self.plan;
        let edges = EdgeIndex::complete(n);
        let groups = CategoryGroups::new(&scene.categories, self.cfg.num_categories)?;
        let truth: Vec<Var> = (0..plan.total())
            .map(|t| g.constant(DArray::new(vec![n, 2], scene.frame(t)).expect("frame shape")))
            .collect();

        let mut edge_state = self.encoder.zero_state(g, &edges);
        let mut graphs: Vec<Option<InferredGraph>> = vec![None; plan.windows];
        let mut prepared: Vec<Option<AttentionGraph>> = vec![None; plan.windows];
        let mut next_graph = 0;
        let mut state = self.decoder.zero_state(g, n);
        let mut outputs: Vec<Var> = Vec::with_capacity(plan.total() - 1);

        for k in 0..plan.total() - 1 {
            let input = if k < plan.history {
                truth[k]
            } else {
                let pred = outputs[k - 1];
                match opts.policy {
                    InputPolicy::FreeRun => pred,
                    InputPolicy::TeacherForcing => truth[k],
                    InputPolicy::WindowReset if plan.is_future_boundary(k) => truth[k],
                    InputPolicy::WindowReset => pred,
                    InputPolicy::Mix(lambda) if plan.is_future_boundary(k) => {
                        let fixed = g.detach(pred);
                        let a = g.scale(fixed, lambda);
                        let b = g.scale(truth[k], 1.0 - lambda);
                        g.add(a, b)?
                    }
                    InputPolicy::Mix(_) => pred,
                }
            };

            let gi = plan.graph_for_step(k + 1);
            while next_graph <= gi {
                let m = next_graph;
                let window = match opts.mode {
                    Mode::Train => self.window_input(g, n, m, |i, t| scene.position(i, t))?,
                    Mode::Eval => {
                        let seen: Vec<Vec<f64>> = (0..plan.total())
                            .map(|t| {
                                if t < plan.history || t > outputs.len() {
                                    scene.frame(t)
                                } else {
                                    g.value(outputs[t - 1]).values().to_vec()
                                }
                            })
                            .collect();
                        self.window_input(g, n, m, |i, t| [seen[t][2 * i], seen[t][2 * i + 1]])?
                    }
                };
                let mut inferred = self.infer_graph(g, store, window, &edges, &mut edge_state, opts.mode, rng)?;
                if let Some(Some(z)) = opts.relation_override.as_ref().and_then(|o| o.get(m)) {
                    if z.len() != edges.len() {
                        return Err(Error::Shape(format!("override has {} values for {} pairs", z.len(), edges.len())));
                    }
                    inferred.z = g.constant(DArray::new(vec![edges.len(), 1], z.clone())?);
                }
                prepared[m] = Some(self.decoder.prepare_graph(g, store, inferred.z, inferred.features, &edges)?);
                graphs[m] = Some(inferred);
                next_graph += 1;
            }
            let attention = prepared[gi].as_ref().expect("graph prepared");
            let (next, mu) =
                self.decoder
                    .step(g, store, &state, &groups, attention, input, self.cfg.output_noise, rng)?;
            state = next;
            outputs.push(mu);
        }
        Ok(Rollout { edges, outputs, graphs })
    }
}

/// `(1 / (N T_f)) Σ_future ||X^t - X̂^t||²` between rollout outputs and `targets[s]`.
pub fn future_squared_error(g: &mut Graph, rollout: &Rollout, plan: &WindowPlan, targets: &[Var]) -> Result<Var> {
    let n = rollout.edges.num_nodes();
    let mut acc: Option<Var> = None;
    for s in plan.history..plan.total() {
        let d = g.sub(rollout.output(s), targets[s])?;
        let sq = g.mul(d, d)?;
        let t = g.sum(sq);
        acc = Some(match acc {
            None => t,
            Some(a) => g.add(a, t)?,
        });
    }
    let total = acc.ok_or_else(|| Error::Contract("no future steps".into()))?;
    Ok(g.scale(total, 1.0 / (n * plan.future) as f64))
}

/// Ground-truth frames as tape constants, indexed by step.
pub fn truth_frames(g: &mut Graph, scene: &Scene) -> Vec<Var> {
    (0..scene.steps())
        .map(|t| g.constant(DArray::new(vec![scene.num_agents(), 2], scene.frame(t)).expect("frame shape")))
        .collect()
}
