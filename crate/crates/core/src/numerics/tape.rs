//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! A [`Graph`] is built fresh for every forward pass. Operations append
//! nodes holding their output value plus whatever the backward rule needs;
//! [`Graph::backward`] walks the tape in reverse and accumulates adjoints.
//! Everything is 2-D row-major unless noted; vectors are `[n, 1]` or `[n]`.

use std::collections::{BTreeMap, HashMap};

use super::array::DArray;
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    DivScalar(Var, Var),
    Elu(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    LnClamped(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    Sum(Var),
    RowSum(Var),
    MulRows(Var, Var),
    Reshape(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    SegmentSoftmax {
        z: Var,
        a: Var,
        segments: Vec<usize>,
    },
    Max(Var, usize),
}

#[derive(Debug)]
struct Node {
    value: DArray,
    op: Op,
}

/// Batch statistics observed by a train-mode batch normalization call.
#[derive(Clone, Debug)]
pub struct BnObservation {
    pub prefix: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Computation tape for one forward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    bn_observations: Vec<BnObservation>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    per_node: Vec<Option<Vec<f64>>>,
    param_nodes: Vec<(String, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to any node; zeros if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> DArray {
        let shape = self.shapes[v.0].clone();
        match &self.per_node[v.0] {
            Some(g) => DArray::new(shape, g.clone()).expect("gradient shape"),
            None => DArray::zeros(&shape),
        }
    }

    /// Gradient map over every trainable key in `store`; untouched keys get zeros.
    pub fn params(&self, store: &ParamStore) -> BTreeMap<String, DArray> {
        let mut out: BTreeMap<String, DArray> = store
            .trainable()
            .map(|(k, v)| (k.to_string(), DArray::zeros(v.shape())))
            .collect();
        for (key, var) in &self.param_nodes {
            if let (Some(slot), Some(g)) = (out.get_mut(key), &self.per_node[var.0]) {
                for (s, x) in slot.values_mut().iter_mut().zip(g) {
                    *s += x;
                }
            }
        }
        out
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DArray, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DArray {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let a = &self.nodes[v.0].value;
        (a.rows(), a.cols())
    }

    pub fn bn_observations(&self) -> &[BnObservation] {
        &self.bn_observations
    }

    pub fn take_bn_observations(&mut self) -> Vec<BnObservation> {
        std::mem::take(&mut self.bn_observations)
    }

    /// Untracked input (no gradient is reported for it unless asked via [`Gradients::wrt`]).
    pub fn constant(&mut self, value: DArray) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Stop-gradient: a constant copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf)
    }

    /// Tracked parameter; each key maps to exactly one node per graph.
    pub fn param(&mut self, store: &ParamStore, key: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(key) {
            return Ok(v);
        }
        let value = store
            .get(key)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{key}`")))?
            .clone();
        let v = self.push(value, Op::Param);
        self.params.insert(key.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.rows_cols(a);
        let (k2, m) = self.rows_cols(b);
        if k != k2 {
            return Err(shape_err(format!(
                "matmul {:?} x {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = vec![0.0; n * m];
        if n > 0 && m > 0 && k > 0 {
            let av = self.nodes[a.0].value.values();
            let bv = self.nodes[b.0].value.values();
            // SAFETY: slices sized n*k, k*m, n*m with contiguous row-major strides.
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    k,
                    m,
                    1.0,
                    av.as_ptr(),
                    k as isize,
                    1,
                    bv.as_ptr(),
                    m as isize,
                    1,
                    0.0,
                    out.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }
        }
        let value = DArray::new(vec![n, m], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `x[n, m] + b[m]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = self.rows_cols(x);
        if self.nodes[b.0].value.len() != m {
            return Err(shape_err(format!(
                "bias {:?} for {:?}",
                self.shape(b),
                self.shape(x)
            )));
        }
        let xv = self.nodes[x.0].value.values();
        let bv = self.nodes[b.0].value.values();
        let mut out = xv.to_vec();
        for r in 0..n {
            for (o, bb) in out[r * m..(r + 1) * m].iter_mut().zip(bv) {
                *o += bb;
            }
        }
        let value = DArray::new(vec![n, m], out)?;
        Ok(self.push(value, Op::AddBias(x, b)))
    }

    fn zip_same(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        if av.len() != bv.len() {
            return Err(shape_err(format!(
                "elementwise {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = av
            .values()
            .iter()
            .zip(bv.values())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = DArray::new(av.shape().to_vec(), out)?;
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = &self.nodes[a.0].value;
        let out = av.values().iter().map(|x| f(*x)).collect();
        let value = DArray::new(av.shape().to_vec(), out).expect("same shape");
        self.push(value, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x + c, Op::AddScalar(a))
    }

    /// `a / s` with `s` a single-element node.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.nodes[s.0].value.len() != 1 {
            return Err(shape_err("divisor must be scalar".into()));
        }
        let d = self.nodes[s.0].value.values()[0];
        Ok(self.map(a, |x| x / d, Op::DivScalar(a, s)))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { x.exp_m1() }, Op::Elu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        // `f64::max` would turn NaN into 0 and hide divergence.
        self.map(a, |x| if x > 0.0 || x.is_nan() { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, f64::exp, Op::Exp(a))
    }

    /// `ln(max(x, floor))`; the gradient is zero below the floor.
    pub fn ln_clamped(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, |x| x.max(floor).ln(), Op::LnClamped(a, floor))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.rows_cols(parts[0]).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rows_cols(p);
            if r != rows {
                return Err(shape_err(format!("concat rows {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value.values()[r * w..(r + 1) * w]);
            }
        }
        let value = DArray::new(vec![rows, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (rows, cols) = self.rows_cols(a);
        if start + width > cols {
            return Err(shape_err(format!("slice {start}+{width} of {cols} columns")));
        }
        let av = self.nodes[a.0].value.values();
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&av[r * cols + start..r * cols + start + width]);
        }
        let value = DArray::new(vec![rows, width], out)?;
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.rows_cols(a);
        let av = self.nodes[a.0].value.values();
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(shape_err(format!("gather row {i} of {rows}")));
            }
            out.extend_from_slice(&av[i * cols..(i + 1) * cols]);
        }
        let value = DArray::new(vec![idx.len(), cols], out)?;
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec())))
    }

    /// Sums row `r` of `a` into output row `idx[r]`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], out_rows: usize) -> Result<Var> {
        let (rows, cols) = self.rows_cols(a);
        if idx.len() != rows {
            return Err(shape_err(format!("scatter index {} for {rows} rows", idx.len())));
        }
        let av = self.nodes[a.0].value.values();
        let mut out = vec![0.0; out_rows * cols];
        for (r, &t) in idx.iter().enumerate() {
            if t >= out_rows {
                return Err(shape_err(format!("scatter target {t} of {out_rows}")));
            }
            for c in 0..cols {
                out[t * cols + c] += av[r * cols + c];
            }
        }
        let value = DArray::new(vec![out_rows, cols], out)?;
        Ok(self.push(value, Op::ScatterAddRows(a, idx.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.sum();
        self.push(DArray::scalar(s), Op::Sum(a))
    }

    /// Per-row sums as `[rows, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (rows, cols) = self.rows_cols(a);
        let av = self.nodes[a.0].value.values();
        let out = (0..rows)
            .map(|r| av[r * cols..(r + 1) * cols].iter().sum())
            .collect();
        let value = DArray::new(vec![rows, 1], out).expect("row sum shape");
        self.push(value, Op::RowSum(a))
    }

    /// Scales each row of `a[n, m]` by the matching entry of `w[n]`.
    pub fn mul_rows(&mut self, a: Var, w: Var) -> Result<Var> {
        let (rows, cols) = self.rows_cols(a);
        if self.nodes[w.0].value.len() != rows {
            return Err(shape_err(format!(
                "row weights {:?} for {:?}",
                self.shape(w),
                self.shape(a)
            )));
        }
        let av = self.nodes[a.0].value.values();
        let wv = self.nodes[w.0].value.values();
        let mut out = av.to_vec();
        for r in 0..rows {
            for o in &mut out[r * cols..(r + 1) * cols] {
                *o *= wv[r];
            }
        }
        let value = DArray::new(vec![rows, cols], out)?;
        Ok(self.push(value, Op::MulRows(a, w)))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.nodes[a.0].value.clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Per-column batch normalization of `x[n, m]`.
    ///
    /// With `running = None` the batch statistics are used and recorded under
    /// `prefix`; otherwise the supplied `(mean, var)` are applied as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        prefix: &str,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<Var> {
        let (n, m) = self.rows_cols(x);
        if self.nodes[gamma.0].value.len() != m || self.nodes[beta.0].value.len() != m {
            return Err(shape_err(format!("batch norm affine for {m} features")));
        }
        let xv = self.nodes[x.0].value.values();
        let (mean, var, batch_stats) = match running {
            Some((rm, rv)) => (rm.to_vec(), rv.to_vec(), false),
            None => {
                let mut mean = vec![0.0; m];
                let mut var = vec![0.0; m];
                if n > 0 {
                    for r in 0..n {
                        for c in 0..m {
                            mean[c] += xv[r * m + c];
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= n as f64);
                    for r in 0..n {
                        for c in 0..m {
                            let d = xv[r * m + c] - mean[c];
                            var[c] += d * d;
                        }
                    }
                    var.iter_mut().for_each(|v| *v /= n as f64);
                }
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gv = self.nodes[gamma.0].value.values();
        let bv = self.nodes[beta.0].value.values();
        let mut xhat = vec![0.0; n * m];
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            for c in 0..m {
                let h = (xv[r * m + c] - mean[c]) * inv_std[c];
                xhat[r * m + c] = h;
                out[r * m + c] = gv[c] * h + bv[c];
            }
        }
        if batch_stats && n > 0 {
            let unbiased = if n > 1 {
                var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect()
            } else {
                var.clone()
            };
            self.bn_observations.push(BnObservation {
                prefix: prefix.to_string(),
                mean,
                var: unbiased,
            });
        }
        let value = DArray::new(vec![n, m], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        ))
    }

    /// Weighted softmax within segments: `alpha_e = z_e exp(a_e) / sum_{f in seg(e)} z_f exp(a_f)`.
    ///
    /// `z`, `a` hold one entry per edge; `segments[e]` names the edge's group.
    pub fn segment_softmax(&mut self, z: Var, a: Var, segments: &[usize]) -> Result<Var> {
        let zv = self.nodes[z.0].value.values();
        let av = self.nodes[a.0].value.values();
        if zv.len() != segments.len() || av.len() != segments.len() {
            return Err(shape_err("segment softmax lengths differ".into()));
        }
        let groups = segments.iter().copied().max().map_or(0, |m| m + 1);
        let mut max = vec![f64::NEG_INFINITY; groups];
        for (e, &s) in segments.iter().enumerate() {
            max[s] = max[s].max(av[e]);
        }
        let w: Vec<f64> = segments
            .iter()
            .enumerate()
            .map(|(e, &s)| zv[e] * (av[e] - max[s]).exp())
            .collect();
        let mut total = vec![0.0; groups];
        for (e, &s) in segments.iter().enumerate() {
            total[s] += w[e];
        }
        let out = segments
            .iter()
            .enumerate()
            .map(|(e, &s)| if total[s] > 0.0 { w[e] / total[s] } else { 0.0 })
            .collect();
        let value = DArray::new(vec![segments.len(), 1], out)?;
        Ok(self.push(
            value,
            Op::SegmentSoftmax {
                z,
                a,
                segments: segments.to_vec(),
            },
        ))
    }

    /// Maximum entry; the subgradient goes to the lowest index among ties.
    pub fn max(&mut self, a: Var) -> Result<Var> {
        let av = self.nodes[a.0].value.values();
        if av.is_empty() {
            return Err(shape_err("max of empty array".into()));
        }
        let mut best = 0;
        for (i, &x) in av.iter().enumerate() {
            if x > av[best] {
                best = i;
            }
        }
        let value = DArray::scalar(av[best]);
        Ok(self.push(value, Op::Max(a, best)))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], lens: &[usize], v: Var) -> &'a mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; lens[v.0]])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let (n, k) = self.rows_cols(*a);
                    let m = self.rows_cols(*b).1;
                    if n > 0 && m > 0 && k > 0 {
                        let av = self.nodes[a.0].value.values();
                        let bv = self.nodes[b.0].value.values();
                        let ga = slot(&mut grads, &lens, *a);
                        // SAFETY: dims match the forward call; B read transposed via strides.
                        unsafe {
                            matrixmultiply::dgemm(
                                n, m, k, 1.0,
                                g.as_ptr(), m as isize, 1,
                                bv.as_ptr(), 1, m as isize,
                                1.0,
                                ga.as_mut_ptr(), k as isize, 1,
                            );
                        }
                        let gb = slot(&mut grads, &lens, *b);
                        // SAFETY: A read transposed via strides.
                        unsafe {
                            matrixmultiply::dgemm(
                                k, n, m, 1.0,
                                av.as_ptr(), 1, k as isize,
                                g.as_ptr(), m as isize, 1,
                                1.0,
                                gb.as_mut_ptr(), m as isize, 1,
                            );
                        }
                    }
                }
                Op::AddBias(x, b) => {
                    let m = self.rows_cols(*x).1;
                    let gx = slot(&mut grads, &lens, *x);
                    gx.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    let gb = slot(&mut grads, &lens, *b);
                    for (idx, d) in g.iter().enumerate() {
                        gb[idx % m] += d;
                    }
                }
                Op::Add(a, b) => {
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    let gb = slot(&mut grads, &lens, *b);
                    gb.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                }
                Op::Sub(a, b) => {
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    let gb = slot(&mut grads, &lens, *b);
                    gb.iter_mut().zip(&g).for_each(|(s, d)| *s -= d);
                }
                Op::Mul(a, b) => {
                    let av = self.nodes[a.0].value.values();
                    let bv = self.nodes[b.0].value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), y) in ga.iter_mut().zip(&g).zip(bv) {
                        *s += d * y;
                    }
                    let gb = slot(&mut grads, &lens, *b);
                    for ((s, d), x) in gb.iter_mut().zip(&g).zip(av) {
                        *s += d * x;
                    }
                }
                Op::Scale(a, c) => {
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().zip(&g).for_each(|(s, d)| *s += c * d);
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                }
                Op::DivScalar(a, s) => {
                    let d = self.nodes[s.0].value.values()[0];
                    let av = self.nodes[a.0].value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().zip(&g).for_each(|(x, gg)| *x += gg / d);
                    let dot: f64 = g.iter().zip(av).map(|(gg, x)| gg * x).sum();
                    slot(&mut grads, &lens, *s)[0] -= dot / (d * d);
                }
                Op::Elu(a) => {
                    let av = self.nodes[a.0].value.values();
                    let yv = node.value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for (((s, d), x), y) in ga.iter_mut().zip(&g).zip(av).zip(yv) {
                        *s += if *x > 0.0 { *d } else { d * (y + 1.0) };
                    }
                }
                Op::Tanh(a) => {
                    let yv = node.value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), y) in ga.iter_mut().zip(&g).zip(yv) {
                        *s += d * (1.0 - y * y);
                    }
                }
                Op::Relu(a) => {
                    let av = self.nodes[a.0].value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), x) in ga.iter_mut().zip(&g).zip(av) {
                        if *x > 0.0 {
                            *s += d;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let yv = node.value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), y) in ga.iter_mut().zip(&g).zip(yv) {
                        *s += d * y * (1.0 - y);
                    }
                }
                Op::Exp(a) => {
                    let yv = node.value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), y) in ga.iter_mut().zip(&g).zip(yv) {
                        *s += d * y;
                    }
                }
                Op::LnClamped(a, floor) => {
                    let av = self.nodes[a.0].value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for ((s, d), x) in ga.iter_mut().zip(&g).zip(av) {
                        if *x > *floor {
                            *s += d / x;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.rows_cols(*p).1;
                        let gp = slot(&mut grads, &lens, *p);
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + offset + c];
                            }
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.rows_cols(*a);
                    let w = node.value.cols();
                    let ga = slot(&mut grads, &lens, *a);
                    for r in 0..rows {
                        for c in 0..w {
                            ga[r * cols + start + c] += g[r * w + c];
                        }
                    }
                }
                Op::GatherRows(a, idx) => {
                    let cols = self.rows_cols(*a).1;
                    let ga = slot(&mut grads, &lens, *a);
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..cols {
                            ga[src * cols + c] += g[r * cols + c];
                        }
                    }
                }
                Op::ScatterAddRows(a, idx) => {
                    let cols = self.rows_cols(*a).1;
                    let ga = slot(&mut grads, &lens, *a);
                    for (r, &t) in idx.iter().enumerate() {
                        for c in 0..cols {
                            ga[r * cols + c] += g[t * cols + c];
                        }
                    }
                }
                Op::Sum(a) => {
                    let ga = slot(&mut grads, &lens, *a);
                    ga.iter_mut().for_each(|s| *s += g[0]);
                }
                Op::RowSum(a) => {
                    let cols = self.rows_cols(*a).1;
                    let ga = slot(&mut grads, &lens, *a);
                    for (idx, s) in ga.iter_mut().enumerate() {
                        *s += g[idx / cols];
                    }
                }
                Op::MulRows(a, w) => {
                    let (rows, cols) = self.rows_cols(*a);
                    let av = self.nodes[a.0].value.values();
                    let wv = self.nodes[w.0].value.values();
                    let ga = slot(&mut grads, &lens, *a);
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[r * cols + c] += g[r * cols + c] * wv[r];
                        }
                    }
                    let gw = slot(&mut grads, &lens, *w);
                    for r in 0..rows {
                        let mut acc = 0.0;
                        for c in 0..cols {
                            acc += g[r * cols + c] * av[r * cols + c];
                        }
                        gw[r] += acc;
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    batch_stats,
                } => {
                    let (n, m) = self.rows_cols(*x);
                    let gv = self.nodes[gamma.0].value.values();
                    let mut sum_dy = vec![0.0; m];
                    let mut sum_dy_xhat = vec![0.0; m];
                    for r in 0..n {
                        for c in 0..m {
                            sum_dy[c] += g[r * m + c];
                            sum_dy_xhat[c] += g[r * m + c] * xhat[r * m + c];
                        }
                    }
                    let gx = slot(&mut grads, &lens, *x);
                    let nf = n as f64;
                    for r in 0..n {
                        for c in 0..m {
                            let idx = r * m + c;
                            gx[idx] += if *batch_stats {
                                gv[c] * inv_std[c] / nf
                                    * (nf * g[idx] - sum_dy[c] - xhat[idx] * sum_dy_xhat[c])
                            } else {
                                gv[c] * inv_std[c] * g[idx]
                            };
                        }
                    }
                    let gg = slot(&mut grads, &lens, *gamma);
                    gg.iter_mut().zip(&sum_dy_xhat).for_each(|(s, d)| *s += d);
                    let gb = slot(&mut grads, &lens, *beta);
                    gb.iter_mut().zip(&sum_dy).for_each(|(s, d)| *s += d);
                }
                Op::SegmentSoftmax { z, a, segments } => {
                    let alpha = node.value.values();
                    let zv = self.nodes[z.0].value.values();
                    let av = self.nodes[a.0].value.values();
                    let groups = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; groups];
                    for (e, &s) in segments.iter().enumerate() {
                        dot[s] += g[e] * alpha[e];
                    }
                    let ga = slot(&mut grads, &lens, *a);
                    for (e, &s) in segments.iter().enumerate() {
                        ga[e] += alpha[e] * (g[e] - dot[s]);
                    }
                    // d alpha_f / d z_e = exp(a_e - max) / total * (delta_fe - alpha_f)
                    let mut max = vec![f64::NEG_INFINITY; groups];
                    for (e, &s) in segments.iter().enumerate() {
                        max[s] = max[s].max(av[e]);
                    }
                    let mut total = vec![0.0; groups];
                    for (e, &s) in segments.iter().enumerate() {
                        total[s] += zv[e] * (av[e] - max[s]).exp();
                    }
                    let gz = slot(&mut grads, &lens, *z);
                    for (e, &s) in segments.iter().enumerate() {
                        if total[s] > 0.0 {
                            gz[e] += (av[e] - max[s]).exp() / total[s] * (g[e] - dot[s]);
                        }
                    }
                }
                Op::Max(a, best) => {
                    slot(&mut grads, &lens, *a)[*best] += g[0];
                }
            }
            grads[i] = Some(g);
        }

        let param_nodes = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients {
            per_node: grads,
            param_nodes,
            shapes,
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
