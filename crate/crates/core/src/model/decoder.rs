//! Recursive decoder: category-aware attention over inferred edges,
//! category-aware GRUs and a residual position head.

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::graph::EdgeIndex;
use crate::numerics::nn::{affine, init_affine, uniform_init, Activation, LayerSpec};
use crate::numerics::{DArray, Graph, GruStack, Mlp, ParamStore, RngStream, Var};

/// Agents grouped by category: `(category, agent rows)` in ascending category order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryGroups {
    n: usize,
    groups: Vec<(usize, Vec<usize>)>,
}

impl CategoryGroups {
    pub fn new(categories: &[usize], num_categories: usize) -> Result<Self> {
        let mut rows = vec![Vec::new(); num_categories];
        for (i, &c) in categories.iter().enumerate() {
            if c >= num_categories {
                return Err(Error::Config(format!("agent {i} has category {c} outside [0, {num_categories})")));
            }
            rows[c].push(i);
        }
        let groups = rows.into_iter().enumerate().filter(|(_, r)| !r.is_empty()).collect();
        Ok(CategoryGroups {
            n: categories.len(),
            groups,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> &[(usize, Vec<usize>)] {
        &self.groups
    }

    /// Applies `f(category, rows_input)` to each group and reassembles the rows.
    pub fn map_rows<F>(&self, g: &mut Graph, x: Var, mut f: F) -> Result<Var>
    where
        F: FnMut(&mut Graph, usize, Var) -> Result<Var>,
    {
        if self.groups.len() == 1 {
            return f(g, self.groups[0].0, x);
        }
        let mut acc: Option<Var> = None;
        for (c, rows) in &self.groups {
            let part = g.gather_rows(x, rows)?;
            let y = f(g, *c, part)?;
            let y = g.scatter_add_rows(y, rows, self.n)?;
            acc = Some(match acc {
                None => y,
                Some(a) => g.add(a, y)?,
            });
        }
        acc.ok_or_else(|| Error::Contract("no agents".into()))
    }
}

/// Recurrent state per GRU layer, each `[N, H]`.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub hidden: Vec<Var>,
}

impl DecoderState {
    pub fn top(&self) -> Var {
        *self.hidden.last().expect("at least one layer")
    }
}

/// Inferred edges of one window prepared for repeated attention steps.
#[derive(Clone, Debug)]
pub struct AttentionGraph {
    /// Edges with `z > 1/2`, as positions into the full pair list.
    pub selected: Vec<usize>,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub z: Option<Var>,
    query_edge: Option<Var>,
    key_edge: Option<Var>,
    value_edge: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub hidden: usize,
    pub edge_dim: usize,
    pub num_categories: usize,
    pub homogeneous: bool,
    pub grus: Vec<GruStack>,
    pub out: Mlp,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden;
        Decoder {
            hidden: h,
            edge_dim: cfg.edge_dim,
            num_categories: cfg.num_categories,
            homogeneous: cfg.homogeneous,
            grus: (0..cfg.num_categories)
                .map(|c| GruStack::new(&format!("dec.gru.{c}"), h + 2, h, cfg.gru_layers))
                .collect(),
            out: Mlp::new(
                "dec.out",
                h,
                vec![
                    LayerSpec::new(h, Activation::Relu, false),
                    LayerSpec::new(h, Activation::Relu, false),
                    LayerSpec::new(2, Activation::Identity, false),
                ],
            ),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        let (h, d) = (self.hidden, self.edge_dim);
        if !self.homogeneous {
            for kind in ["gq", "gk", "gv"] {
                for c in 0..self.num_categories {
                    init_affine(store, &format!("dec.{kind}.{c}"), h, h, rng);
                }
            }
        }
        // First layers of the query, key and value maps act on `[node part, edge feature]`;
        // the weight is stored as two blocks so the edge block can be applied once per window.
        for p in ["dec.fq", "dec.fk", "dec.fv.0"] {
            store.insert(format!("{p}.wh"), uniform_init(&[h, h], h + d, rng));
            store.insert(format!("{p}.we"), uniform_init(&[d, h], h + d, rng));
            store.insert(format!("{p}.b"), uniform_init(&[h], h + d, rng));
        }
        init_affine(store, "dec.fv.1", h, h, rng);
        for gru in &self.grus {
            gru.init(store, rng);
        }
        self.out.init(store, rng);
    }

    pub fn zero_state(&self, g: &mut Graph, n: usize) -> DecoderState {
        let layers = self.grus[0].layers();
        DecoderState {
            hidden: (0..layers).map(|_| g.constant(DArray::zeros(&[n, self.hidden]))).collect(),
        }
    }

    /// Selects edges with `z > 1/2` and applies the edge blocks of the query/key/value maps.
    pub fn prepare_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        z: Var,
        edge_features: Var,
        edges: &EdgeIndex,
    ) -> Result<AttentionGraph> {
        let zv = g.value(z).values();
        if zv.len() != edges.len() {
            return Err(Error::Shape(format!("{} relation values for {} pairs", zv.len(), edges.len())));
        }
        let selected: Vec<usize> = (0..zv.len()).filter(|&e| zv[e] > 0.5).collect();
        let sources = selected.iter().map(|&e| edges.sources()[e]).collect();
        let targets = selected.iter().map(|&e| edges.targets()[e]).collect();
        if selected.is_empty() {
            return Ok(AttentionGraph {
                selected,
                sources,
                targets,
                z: None,
                query_edge: None,
                key_edge: None,
                value_edge: None,
            });
        }
        let zs = g.gather_rows(z, &selected)?;
        let es = g.gather_rows(edge_features, &selected)?;
        let edge_block = |g: &mut Graph, p: &str| -> Result<Var> {
            let w = g.param(store, &format!("{p}.we"))?;
            g.matmul(es, w)
        };
        let q = edge_block(g, "dec.fq")?;
        let k = edge_block(g, "dec.fk")?;
        let v = edge_block(g, "dec.fv.0")?;
        Ok(AttentionGraph {
            selected,
            sources,
            targets,
            z: Some(zs),
            query_edge: Some(q),
            key_edge: Some(k),
            value_edge: Some(v),
        })
    }

    fn category_map(&self, g: &mut Graph, store: &ParamStore, kind: &str, h: Var, groups: &CategoryGroups) -> Result<Var> {
        if self.homogeneous {
            return Ok(h);
        }
        groups.map_rows(g, h, |g, c, x| {
            let y = affine(g, store, &format!("dec.{kind}.{c}"), x)?;
            Ok(g.tanh(y))
        })
    }

    /// `node_part[sources] (- node_part[targets]) + edge_part + b`, then tanh.
    fn split_layer(
        g: &mut Graph,
        store: &ParamStore,
        prefix: &str,
        node: Var,
        rows: &[usize],
        minus_rows: Option<&[usize]>,
        edge_part: Var,
    ) -> Result<Var> {
        let wh = g.param(store, &format!("{prefix}.wh"))?;
        let b = g.param(store, &format!("{prefix}.b"))?;
        let nw = g.matmul(node, wh)?;
        let mut x = g.gather_rows(nw, rows)?;
        if let Some(m) = minus_rows {
            let y = g.gather_rows(nw, m)?;
            x = g.sub(x, y)?;
        }
        let x = g.add(x, edge_part)?;
        let x = g.add_bias(x, b)?;
        Ok(g.tanh(x))
    }

    /// Attention-weighted messages `m_j`; agents without a qualifying in-edge get zeros.
    pub fn ham_aggregate(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        groups: &CategoryGroups,
        graph: &AttentionGraph,
    ) -> Result<Var> {
        let n = groups.num_agents();
        let (Some(z), Some(qe), Some(ke), Some(ve)) = (graph.z, graph.query_edge, graph.key_edge, graph.value_edge)
        else {
            return Ok(g.constant(DArray::zeros(&[n, self.hidden])));
        };
        let gq = self.category_map(g, store, "gq", h, groups)?;
        let gk = self.category_map(g, store, "gk", h, groups)?;
        let gv = self.category_map(g, store, "gv", h, groups)?;
        let q = Self::split_layer(g, store, "dec.fq", gq, &graph.sources, None, qe)?;
        let k = Self::split_layer(g, store, "dec.fk", gk, &graph.targets, None, ke)?;
        let qk = g.mul(q, k)?;
        let dot = g.row_sum(qk);
        let scores = g.scale(dot, 1.0 / (self.hidden as f64).sqrt());
        let alpha = g.segment_softmax(z, scores, &graph.targets)?;
        let v = Self::split_layer(g, store, "dec.fv.0", gv, &graph.sources, Some(&graph.targets), ve)?;
        let v = affine(g, store, "dec.fv.1", v)?;
        let v = g.tanh(v);
        let weighted = g.mul_rows(v, alpha)?;
        g.scatter_add_rows(weighted, &graph.targets, n)
    }

    /// Attention weights `α` over the selected edges (inspection helper).
    pub fn attention_weights(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        h: Var,
        groups: &CategoryGroups,
        graph: &AttentionGraph,
    ) -> Result<Vec<f64>> {
        let (Some(z), Some(qe), Some(ke)) = (graph.z, graph.query_edge, graph.key_edge) else {
            return Ok(Vec::new());
        };
        let gq = self.category_map(g, store, "gq", h, groups)?;
        let gk = self.category_map(g, store, "gk", h, groups)?;
        let q = Self::split_layer(g, store, "dec.fq", gq, &graph.sources, None, qe)?;
        let k = Self::split_layer(g, store, "dec.fk", gk, &graph.targets, None, ke)?;
        let qk = g.mul(q, k)?;
        let dot = g.row_sum(qk);
        let scores = g.scale(dot, 1.0 / (self.hidden as f64).sqrt());
        let alpha = g.segment_softmax(z, scores, &graph.targets)?;
        Ok(g.value(alpha).values().to_vec())
    }

    /// One recursive step: messages, category GRUs, residual position update.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        state: &DecoderState,
        groups: &CategoryGroups,
        graph: &AttentionGraph,
        input: Var,
        noise: bool,
        rng: &mut RngStream,
    ) -> Result<(DecoderState, Var)> {
        let m = self.ham_aggregate(g, store, state.top(), groups, graph)?;
        let gru_in = g.concat_cols(&[m, input])?;
        let layers = state.hidden.len();
        // Each layer's new hidden state is reassembled from the per-category GRU stacks.
        let mut new_hidden: Vec<Option<Var>> = vec![None; layers];
        for (c, rows) in groups.groups() {
            let single = groups.groups().len() == 1;
            let x = if single { gru_in } else { g.gather_rows(gru_in, rows)? };
            let hs = state
                .hidden
                .iter()
                .map(|&h| if single { Ok(h) } else { g.gather_rows(h, rows) })
                .collect::<Result<Vec<_>>>()?;
            let out = self.grus[*c].forward(g, store, x, &hs)?;
            for (l, o) in out.into_iter().enumerate() {
                let placed = if single { o } else { g.scatter_add_rows(o, rows, groups.num_agents())? };
                new_hidden[l] = Some(match new_hidden[l] {
                    None => placed,
                    Some(a) => g.add(a, placed)?,
                });
            }
        }
        let next = DecoderState {
            hidden: new_hidden.into_iter().map(|h| h.expect("every layer produced")).collect(),
        };
        let mut top = next.top();
        if noise {
            let shape = g.shape(top).to_vec();
            let count = shape.iter().product();
            let eps = g.constant(DArray::new(shape, (0..count).map(|_| rng.normal()).collect())?);
            top = g.add(top, eps)?;
        }
        let delta = self.out.forward(g, store, top, true)?;
        let mu = g.add(input, delta)?;
        Ok((next, mu))
    }
}
