/// Ordered pairs `(source, target)` with `source != target`, row-major over
/// the `N x N` adjacency with the diagonal skipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeIndex {
    n: usize,
    sources: Vec<usize>,
    targets: Vec<usize>,
}

impl EdgeIndex {
    pub fn complete(n: usize) -> Self {
        let mut sources = Vec::with_capacity(n * n.saturating_sub(1));
        let mut targets = Vec::with_capacity(sources.capacity());
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                sources.push(i);
                targets.push(j);
            }
        }
        EdgeIndex { n, sources, targets }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn pair(&self, e: usize) -> (usize, usize) {
        (self.sources[e], self.targets[e])
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i == j || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * (self.n - 1) + if j > i { j - 1 } else { j })
    }

    /// Edge values to a dense `N x N` row-major matrix with zero diagonal.
    pub fn to_dense(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for (e, v) in values.iter().enumerate() {
            out[self.sources[e] * self.n + self.targets[e]] = *v;
        }
        out
    }

    pub fn from_dense(&self, dense: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|e| dense[self.sources[e] * self.n + self.targets[e]]).collect()
    }
}
