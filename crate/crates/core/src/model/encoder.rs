//! Per-window interaction-graph inference over the complete directed graph.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::EdgeIndex;
use crate::numerics::nn::{Activation, LayerSpec};
use crate::numerics::{DArray, Graph, GruStack, Mlp, ParamStore, RngStream, Var};

fn elu_bn(width: usize) -> LayerSpec {
    LayerSpec::new(width, Activation::Elu, true)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub embed: Mlp,
    pub edge_msg: Mlp,
    pub node_update: Mlp,
    pub edge_embed: Mlp,
    pub relation_gru: GruStack,
    pub project: Mlp,
    pub tau: usize,
}

/// Deterministic part of one window's inference.
#[derive(Clone, Copy, Debug)]
pub struct EdgeEmbedding {
    /// Node embeddings after the message-passing update, `[N, H]`.
    pub nodes: Var,
    /// Edge embeddings, one row per ordered pair, `[P, D]`.
    pub edges: Var,
}

impl Encoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (h, d) = (cfg.hidden, cfg.edge_dim);
        Encoder {
            embed: Mlp::new("enc.embed", 2 * cfg.tau, vec![elu_bn(h), elu_bn(h)]),
            edge_msg: Mlp::new("enc.edge_msg", h, vec![elu_bn(h), elu_bn(h)]),
            node_update: Mlp::new("enc.node_update", h, vec![elu_bn(h), elu_bn(h)]),
            edge_embed: Mlp::new("enc.edge_embed", h, vec![elu_bn(d), elu_bn(d)]),
            relation_gru: GruStack::new("enc.relation", d, h, cfg.gru_layers),
            project: Mlp::new(
                "enc.project",
                h,
                vec![elu_bn(h), elu_bn(h), LayerSpec::new(1, Activation::Identity, false)],
            ),
            tau: cfg.tau,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        self.embed.init(store, rng);
        self.edge_msg.init(store, rng);
        self.node_update.init(store, rng);
        self.edge_embed.init(store, rng);
        self.relation_gru.init(store, rng);
        self.project.init(store, rng);
    }

    /// Embeds each agent's window of `tau` positions, given as `[N, 2 tau]`.
    pub fn embed_window(&self, g: &mut Graph, store: &ParamStore, window: Var, train: bool) -> Result<Var> {
        if g.value(window).cols() != 2 * self.tau {
            return Err(Error::Contract(format!(
                "window input must have {} columns, got {:?}",
                2 * self.tau,
                g.shape(window)
            )));
        }
        self.embed.forward(g, store, window, train)
    }

    /// Two message-passing rounds over all ordered pairs.
    pub fn gnn_pass(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        nodes: Var,
        edges: &EdgeIndex,
        train: bool,
    ) -> Result<EdgeEmbedding> {
        let n = edges.num_nodes();
        if n < 2 {
            return Err(Error::Contract(format!("message passing needs N >= 2, got {n}")));
        }
        let rel = pair_difference(g, nodes, edges)?;
        let msg = self.edge_msg.forward(g, store, rel, train)?;
        let agg = g.scatter_add_rows(msg, edges.targets(), n)?;
        let updated = self.node_update.forward(g, store, agg, train)?;
        let rel2 = pair_difference(g, updated, edges)?;
        let edge_out = self.edge_embed.forward(g, store, rel2, train)?;
        Ok(EdgeEmbedding {
            nodes: updated,
            edges: edge_out,
        })
    }

    /// Advances the per-edge recurrent state and projects it to one logit per pair.
    pub fn update_relations(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        edge_emb: Var,
        state: &[Var],
        train: bool,
    ) -> Result<(Var, Vec<Var>)> {
        let next = self.relation_gru.forward(g, store, edge_emb, state)?;
        let top = *next.last().expect("at least one layer");
        let logits = self.project.forward(g, store, top, train)?;
        Ok((logits, next))
    }

    pub fn zero_state(&self, g: &mut Graph, edges: &EdgeIndex) -> Vec<Var> {
        let h = self.relation_gru.hidden();
        (0..self.relation_gru.layers())
            .map(|_| g.constant(DArray::zeros(&[edges.len(), h])))
            .collect()
    }
}

/// `x_i - x_j` for every ordered pair `(i, j)`.
pub fn pair_difference(g: &mut Graph, x: Var, edges: &EdgeIndex) -> Result<Var> {
    let src = g.gather_rows(x, edges.sources())?;
    let tgt = g.gather_rows(x, edges.targets())?;
    g.sub(src, tgt)
}

/// `E = Ẽ + N(0, I)`, reparameterized so gradients reach `Ẽ`.
pub fn sample_edge_features(g: &mut Graph, mean: Var, noise: bool, rng: &mut RngStream) -> Result<Var> {
    if !noise {
        return Ok(mean);
    }
    let shape = g.shape(mean).to_vec();
    let count = shape.iter().product();
    let eps = DArray::new(shape, (0..count).map(|_| rng.normal()).collect())?;
    let eps = g.constant(eps);
    g.add(mean, eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationMode {
    /// Relaxed samples in `(0, 1)` from the binary concrete distribution.
    Relaxed,
    /// Hard `{0, 1}` samples, Bernoulli in the edge probability.
    Hard,
    /// Hard `{0, 1}` by thresholding the probability at 1/2.
    Threshold,
}

/// Relation samples from logits `[P, 1]`.
///
/// One logistic draw `L = ln δ - ln(1 - δ)` per pair drives both modes: the
/// relaxed sample is `σ((ℓ + L) / T)` and the hard sample is `1[ℓ + L > 0]`,
/// which is Bernoulli with probability `σ(ℓ)`.
pub fn sample_relations(
    g: &mut Graph,
    logits: Var,
    temperature: f64,
    mode: RelationMode,
    rng: &mut RngStream,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
    }
    let shape = g.shape(logits).to_vec();
    let count: usize = shape.iter().product();
    let logistic: Vec<f64> = match mode {
        RelationMode::Threshold => vec![0.0; count],
        _ => (0..count)
            .map(|_| {
                let d = rng.open01();
                d.ln() - (1.0 - d).ln()
            })
            .collect(),
    };
    match mode {
        RelationMode::Relaxed => {
            let noise = g.constant(DArray::new(shape, logistic)?);
            let shifted = g.add(logits, noise)?;
            let scaled = g.scale(shifted, 1.0 / temperature);
            Ok(g.sigmoid(scaled))
        }
        RelationMode::Hard | RelationMode::Threshold => {
            let lv = g.value(logits).values();
            let hard = lv
                .iter()
                .zip(&logistic)
                .map(|(l, n)| if l + n > 0.0 { 1.0 } else { 0.0 })
                .collect();
            Ok(g.constant(DArray::new(shape, hard)?))
        }
    }
}
