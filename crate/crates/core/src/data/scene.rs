use crate::error::{Error, Result};

/// One multi-agent episode on a shared time axis.
///
/// Positions are stored agent-major as `[agent][step][x, y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub categories: Vec<usize>,
    steps: usize,
    positions: Vec<f64>,
    /// `truth_graph[i * n + j]` is true when agent `i` influences agent `j`.
    pub truth_graph: Option<Vec<bool>>,
}

impl Scene {
    pub fn new(
        scene_id: impl Into<String>,
        categories: Vec<usize>,
        steps: usize,
        positions: Vec<f64>,
    ) -> Result<Self> {
        let n = categories.len();
        if n < 2 {
            return Err(Error::MalformedData(format!("scene needs at least 2 agents, got {n}")));
        }
        if positions.len() != n * steps * 2 {
            return Err(Error::Shape(format!(
                "{} position values for {n} agents x {steps} steps",
                positions.len()
            )));
        }
        Ok(Scene {
            scene_id: scene_id.into(),
            categories,
            steps,
            positions,
            truth_graph: None,
        })
    }

    pub fn with_truth_graph(mut self, graph: Vec<bool>) -> Result<Self> {
        let n = self.num_agents();
        if graph.len() != n * n {
            return Err(Error::Shape("truth graph must be N x N".into()));
        }
        if (0..n).any(|i| graph[i * n + i]) {
            return Err(Error::MalformedData("truth graph has self loops".into()));
        }
        self.truth_graph = Some(graph);
        Ok(self)
    }

    pub fn num_agents(&self) -> usize {
        self.categories.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn position(&self, agent: usize, step: usize) -> [f64; 2] {
        let o = (agent * self.steps + step) * 2;
        [self.positions[o], self.positions[o + 1]]
    }

    pub fn set_position(&mut self, agent: usize, step: usize, p: [f64; 2]) {
        let o = (agent * self.steps + step) * 2;
        self.positions[o] = p[0];
        self.positions[o + 1] = p[1];
    }

    pub fn raw_positions(&self) -> &[f64] {
        &self.positions
    }

    /// All agents at one step as a row-major `[N, 2]` buffer.
    pub fn frame(&self, step: usize) -> Vec<f64> {
        (0..self.num_agents()).flat_map(|i| self.position(i, step)).collect()
    }

    /// Agent `i`'s positions over `[start, start + len)` flattened to `2 * len` values.
    pub fn segment(&self, agent: usize, start: usize, len: usize) -> Vec<f64> {
        let o = (agent * self.steps + start) * 2;
        self.positions[o..o + 2 * len].to_vec()
    }

    /// Relabels agents: new agent `k` is old agent `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Scene {
        let n = self.num_agents();
        let mut positions = Vec::with_capacity(self.positions.len());
        for &old in perm {
            positions.extend_from_slice(&self.positions[old * self.steps * 2..(old + 1) * self.steps * 2]);
        }
        let truth_graph = self.truth_graph.as_ref().map(|g| {
            let mut out = vec![false; n * n];
            for a in 0..n {
                for b in 0..n {
                    out[a * n + b] = g[perm[a] * n + perm[b]];
                }
            }
            out
        });
        Scene {
            scene_id: self.scene_id.clone(),
            categories: perm.iter().map(|&p| self.categories[p]).collect(),
            steps: self.steps,
            positions,
            truth_graph,
        }
    }

    pub fn check_categories(&self, num_categories: usize) -> Result<()> {
        match self.categories.iter().find(|&&c| c >= num_categories) {
            Some(c) => Err(Error::Config(format!(
                "scene {}: category {c} outside [0, {num_categories})",
                self.scene_id
            ))),
            None => Ok(()),
        }
    }

    /// True when every coordinate lies in `[-1, 1]`.
    pub fn is_normalized(&self) -> bool {
        self.positions.iter().all(|v| (-1.0..=1.0).contains(v))
    }
}
