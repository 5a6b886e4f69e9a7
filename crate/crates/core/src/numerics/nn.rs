//! Affine/MLP blocks, batch normalization and GRU cells on top of the tape.

use super::array::DArray;
use super::params::ParamStore;
use super::rng::RngStream;
use super::tape::{Graph, Var};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub normalize: bool,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation, normalize: bool) -> Self {
        LayerSpec {
            width,
            activation,
            normalize,
        }
    }
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut RngStream) -> DArray {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let count = shape.iter().product();
    let values = (0..count).map(|_| rng.uniform(-bound, bound)).collect();
    DArray::new(shape.to_vec(), values).expect("init shape")
}

pub fn init_affine(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut RngStream) {
    store.insert(format!("{prefix}.w"), uniform_init(&[input, output], input, rng));
    store.insert(format!("{prefix}.b"), uniform_init(&[output], input, rng));
}

pub fn affine(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var) -> Result<Var> {
    let w = g.param(store, &format!("{prefix}.w"))?;
    let b = g.param(store, &format!("{prefix}.b"))?;
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

fn init_batch_norm(store: &mut ParamStore, prefix: &str, width: usize) {
    store.insert(format!("{prefix}.gamma"), DArray::filled(&[width], 1.0));
    store.insert(format!("{prefix}.beta"), DArray::zeros(&[width]));
    store.insert(format!("{prefix}.running_mean"), DArray::zeros(&[width]));
    store.insert(format!("{prefix}.running_var"), DArray::filled(&[width], 1.0));
}

/// Batch normalization; `train` selects batch statistics over running buffers.
pub fn batch_norm(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, train: bool) -> Result<Var> {
    let gamma = g.param(store, &format!("{prefix}.gamma"))?;
    let beta = g.param(store, &format!("{prefix}.beta"))?;
    if train {
        g.batch_norm(x, gamma, beta, BN_EPS, prefix, None)
    } else {
        let missing = || Error::Contract(format!("missing running statistics for `{prefix}`"));
        let mean = store.get(&format!("{prefix}.running_mean")).ok_or_else(missing)?;
        let var = store.get(&format!("{prefix}.running_var")).ok_or_else(missing)?;
        g.batch_norm(x, gamma, beta, BN_EPS, prefix, Some((mean.values(), var.values())))
    }
}

pub fn activate(g: &mut Graph, x: Var, activation: Activation) -> Var {
    match activation {
        Activation::Identity => x,
        Activation::Elu => g.elu(x),
        Activation::Tanh => g.tanh(x),
        Activation::Relu => g.relu(x),
    }
}

/// Stack of `[affine, activation, optional batch norm]` blocks.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub prefix: String,
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, input: usize, layers: Vec<LayerSpec>) -> Self {
        Mlp {
            prefix: prefix.into(),
            input,
            layers,
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input, |l| l.width)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        let mut fan_in = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("{}.{i}", self.prefix);
            init_affine(store, &p, fan_in, layer.width, rng);
            if layer.normalize {
                init_batch_norm(store, &format!("{p}.bn"), layer.width);
            }
            fan_in = layer.width;
        }
    }

    /// Zeroes the last affine layer so the network outputs exactly zero.
    pub fn zero_last_layer(&self, store: &mut ParamStore) {
        let last = self.layers.len() - 1;
        for suffix in ["w", "b"] {
            if let Some(a) = store.get_mut(&format!("{}.{last}.{suffix}", self.prefix)) {
                a.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, train: bool) -> Result<Var> {
        if g.value(x).cols() != self.input {
            return Err(Error::Shape(format!(
                "{}: expected {} input features, got {:?}",
                self.prefix,
                self.input,
                g.shape(x)
            )));
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let p = format!("{}.{i}", self.prefix);
            h = affine(g, store, &p, h)?;
            h = activate(g, h, layer.activation);
            if layer.normalize {
                h = batch_norm(g, store, &format!("{p}.bn"), h, train)?;
            }
        }
        Ok(h)
    }
}

/// Single GRU cell with gate order (reset, update, candidate).
#[derive(Clone, Debug)]
pub struct Gru {
    pub prefix: String,
    pub input: usize,
    pub hidden: usize,
}

impl Gru {
    pub fn new(prefix: impl Into<String>, input: usize, hidden: usize) -> Self {
        Gru {
            prefix: prefix.into(),
            input,
            hidden,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        let h3 = 3 * self.hidden;
        let p = &self.prefix;
        store.insert(format!("{p}.w_ih"), uniform_init(&[self.input, h3], self.hidden, rng));
        store.insert(format!("{p}.b_ih"), uniform_init(&[h3], self.hidden, rng));
        store.insert(format!("{p}.w_hh"), uniform_init(&[self.hidden, h3], self.hidden, rng));
        store.insert(format!("{p}.b_hh"), uniform_init(&[h3], self.hidden, rng));
    }

    /// `h' = (1 - u) * n + u * h` with `n = tanh(x W_in + b_in + r * (h W_hn + b_hn))`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, h: Var) -> Result<Var> {
        let hsz = self.hidden;
        if g.value(h).cols() != hsz || g.value(x).cols() != self.input {
            return Err(Error::Shape(format!(
                "{}: input {:?} / hidden {:?} vs widths {} / {}",
                self.prefix,
                g.shape(x),
                g.shape(h),
                self.input,
                hsz
            )));
        }
        let p = &self.prefix;
        let w_ih = g.param(store, &format!("{p}.w_ih"))?;
        let b_ih = g.param(store, &format!("{p}.b_ih"))?;
        let w_hh = g.param(store, &format!("{p}.w_hh"))?;
        let b_hh = g.param(store, &format!("{p}.b_hh"))?;
        let gx = g.matmul(x, w_ih)?;
        let gx = g.add_bias(gx, b_ih)?;
        let gh = g.matmul(h, w_hh)?;
        let gh = g.add_bias(gh, b_hh)?;

        let xr = g.slice_cols(gx, 0, hsz)?;
        let hr = g.slice_cols(gh, 0, hsz)?;
        let r = g.add(xr, hr)?;
        let r = g.sigmoid(r);

        let xu = g.slice_cols(gx, hsz, hsz)?;
        let hu = g.slice_cols(gh, hsz, hsz)?;
        let u = g.add(xu, hu)?;
        let u = g.sigmoid(u);

        let xn = g.slice_cols(gx, 2 * hsz, hsz)?;
        let hn = g.slice_cols(gh, 2 * hsz, hsz)?;
        let rhn = g.mul(r, hn)?;
        let n = g.add(xn, rhn)?;
        let n = g.tanh(n);

        let diff = g.sub(h, n)?;
        let gated = g.mul(u, diff)?;
        g.add(n, gated)
    }
}

/// Stacked GRU; layer `l > 0` consumes layer `l - 1`'s new hidden state.
#[derive(Clone, Debug)]
pub struct GruStack {
    pub cells: Vec<Gru>,
}

impl GruStack {
    pub fn new(prefix: &str, input: usize, hidden: usize, layers: usize) -> Self {
        let cells = (0..layers)
            .map(|l| Gru::new(format!("{prefix}.{l}"), if l == 0 { input } else { hidden }, hidden))
            .collect();
        GruStack { cells }
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut RngStream) {
        for c in &self.cells {
            c.init(store, rng);
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, hidden: &[Var]) -> Result<Vec<Var>> {
        if hidden.len() != self.cells.len() {
            return Err(Error::Shape(format!(
                "{} hidden states for {} layers",
                hidden.len(),
                self.cells.len()
            )));
        }
        let mut input = x;
        let mut out = Vec::with_capacity(hidden.len());
        for (cell, &h) in self.cells.iter().zip(hidden) {
            let h_new = cell.forward(g, store, input, h)?;
            out.push(h_new);
            input = h_new;
        }
        Ok(out)
    }
}
