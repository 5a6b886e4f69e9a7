//! Central finite-difference oracle for checking tape gradients.
//!
//! The oracle only ever evaluates forward values; it never touches the
//! backward rules it is checking.

use super::array::DArray;
use super::params::ParamStore;
use super::rng::RngStream;
use super::tape::{Graph, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-6;
/// Denominator floor for relative errors so vanishing gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn random_array(shape: &[usize], rng: &mut RngStream) -> DArray {
    let n = shape.iter().product();
    DArray::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).expect("shape")
}

/// Compares analytic gradients of `loss_fn` against central differences on
/// `probes` randomly chosen coordinates of the input and the trainable parameters.
pub fn check_gradients<F>(
    store: &ParamStore,
    input: &DArray,
    probes: usize,
    seed: u64,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, Var) -> Result<Var>,
{
    check_gradients_where(store, input, probes, seed, |_| true, loss_fn)
}

/// Like [`check_gradients`] but only probes parameters whose key passes `keep`.
pub fn check_gradients_where<K, F>(
    store: &ParamStore,
    input: &DArray,
    probes: usize,
    seed: u64,
    keep: K,
    loss_fn: F,
) -> Result<GradCheckReport>
where
    K: Fn(&str) -> bool,
    F: Fn(&mut Graph, &ParamStore, Var) -> Result<Var>,
{
    let eval = |store: &ParamStore, input: &DArray| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let loss = loss_fn(&mut g, store, x)?;
        Ok(g.value(loss).values()[0])
    };

    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let loss = loss_fn(&mut g, store, x)?;
    let grads = g.backward(loss)?;
    let input_grad = grads.wrt(x);
    let param_grads = grads.params(store);

    // Candidate coordinates: (None, i) is an input entry, (Some(key), i) a parameter entry.
    let mut coords: Vec<(Option<String>, usize)> = (0..input.len()).map(|i| (None, i)).collect();
    for (k, v) in store.trainable().filter(|(k, _)| keep(k)) {
        coords.extend((0..v.len()).map(|i| (Some(k.to_string()), i)));
    }
    let mut rng = RngStream::new(seed, 0xF1D1);
    let mut report = GradCheckReport {
        probes: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for _ in 0..probes.min(coords.len()) {
        let (key, idx) = coords[rng.index(coords.len())].clone();
        let (analytic, numeric) = match &key {
            None => {
                let mut plus = input.clone();
                plus.values_mut()[idx] += FD_STEP;
                let mut minus = input.clone();
                minus.values_mut()[idx] -= FD_STEP;
                let n = (eval(store, &plus)? - eval(store, &minus)?) / (2.0 * FD_STEP);
                (input_grad.values()[idx], n)
            }
            Some(k) => {
                let mut plus = store.clone();
                plus.get_mut(k).unwrap().values_mut()[idx] += FD_STEP;
                let mut minus = store.clone();
                minus.get_mut(k).unwrap().values_mut()[idx] -= FD_STEP;
                let n = (eval(&plus, input)? - eval(&minus, input)?) / (2.0 * FD_STEP);
                (param_grads[k].values()[idx], n)
            }
        };
        let err = relative_error(analytic, numeric);
        report.probes += 1;
        if err >= report.max_rel_error {
            report.max_rel_error = err;
            let label = format!("{}[{idx}]", key.as_deref().unwrap_or("input"));
            report.worst = Some((label, analytic, numeric));
        }
    }
    Ok(report)
}
