//! Graph-complexity penalties on the tape, plus plain-value counterparts.

use serde::{Deserialize, Serialize};

use super::edges::EdgeIndex;
use super::entropy::in_degrees;
use crate::error::{Error, Result};
use crate::numerics::{DArray, Graph, Var};

/// Floor inside the log of relaxed degree shares.
pub const LN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    #[default]
    Entropy,
    Density,
    Degree,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(PenaltyKind::Entropy),
            "density" => Ok(PenaltyKind::Density),
            "degree" => Ok(PenaltyKind::Degree),
            other => Err(Error::Config(format!("unknown penalty `{other}` (entropy|density|degree)"))),
        }
    }
}

/// Mean edge weight over all ordered pairs of a dense adjacency.
pub fn r_density(z: &[f64], n: usize) -> f64 {
    let total: f64 = in_degrees(z, n).iter().sum();
    total / (n * (n - 1)) as f64
}

/// Largest in-degree divided by `N`.
pub fn r_degree(z: &[f64], n: usize) -> f64 {
    in_degrees(z, n).into_iter().fold(0.0, f64::max) / n as f64
}

fn check_edges(g: &Graph, z: Var, edges: &EdgeIndex) -> Result<()> {
    if edges.num_nodes() < 2 {
        return Err(Error::Contract("penalties need N >= 2".into()));
    }
    if g.value(z).len() != edges.len() {
        return Err(Error::Shape(format!(
            "{} edge weights for {} ordered pairs",
            g.value(z).len(),
            edges.len()
        )));
    }
    Ok(())
}

fn degrees_var(g: &mut Graph, z: Var, edges: &EdgeIndex) -> Result<Var> {
    let col = g.reshape(z, vec![edges.len(), 1])?;
    g.scatter_add_rows(col, edges.targets(), edges.num_nodes())
}

/// Relaxed graph entropy of edge weights `z` (one per ordered pair).
pub fn entropy_var(g: &mut Graph, z: Var, edges: &EdgeIndex) -> Result<Var> {
    check_edges(g, z, edges)?;
    let d = degrees_var(g, z, edges)?;
    let total = g.sum(d);
    if g.value(total).values()[0] <= 0.0 {
        return Ok(g.constant(DArray::scalar(0.0)));
    }
    let p = g.div_scalar(d, total)?;
    let lp = g.ln_clamped(p, LN_FLOOR);
    let plp = g.mul(p, lp)?;
    let s = g.sum(plp);
    Ok(g.scale(s, -1.0 / (edges.num_nodes() as f64).ln()))
}

pub fn density_var(g: &mut Graph, z: Var, edges: &EdgeIndex) -> Result<Var> {
    check_edges(g, z, edges)?;
    let s = g.sum(z);
    Ok(g.scale(s, 1.0 / edges.len() as f64))
}

pub fn degree_var(g: &mut Graph, z: Var, edges: &EdgeIndex) -> Result<Var> {
    check_edges(g, z, edges)?;
    let d = degrees_var(g, z, edges)?;
    let m = g.max(d)?;
    Ok(g.scale(m, 1.0 / edges.num_nodes() as f64))
}

pub fn penalty_var(g: &mut Graph, z: Var, edges: &EdgeIndex, kind: PenaltyKind) -> Result<Var> {
    match kind {
        PenaltyKind::Entropy => entropy_var(g, z, edges),
        PenaltyKind::Density => density_var(g, z, edges),
        PenaltyKind::Degree => degree_var(g, z, edges),
    }
}

/// `recon + (γ / M) Σ_m penalty(z_m)`; with `γ = 0` the reconstruction node is returned untouched.
pub fn regularized_loss(
    g: &mut Graph,
    recon: Var,
    graphs: &[Var],
    edges: &EdgeIndex,
    gamma: f64,
    kind: PenaltyKind,
) -> Result<Var> {
    if !(gamma >= 0.0) {
        return Err(Error::Config(format!("gamma must be nonnegative, got {gamma}")));
    }
    if gamma == 0.0 || graphs.is_empty() {
        return Ok(recon);
    }
    let mut acc = penalty_var(g, graphs[0], edges, kind)?;
    for &z in &graphs[1..] {
        let p = penalty_var(g, z, edges, kind)?;
        acc = g.add(acc, p)?;
    }
    let scaled = g.scale(acc, gamma / graphs.len() as f64);
    g.add(recon, scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::entropy::graph_entropy;
    use crate::numerics::testing::check_gradients;
    use crate::numerics::{ParamStore, RngStream};

    #[test]
    fn density_and_degree_counts() {
        let n = 4;
        let mut z = vec![0.0; 16];
        for (i, j) in [(1, 0), (2, 0), (3, 0), (0, 1)] {
            z[i * n + j] = 1.0;
        }
        assert!((r_density(&z, n) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r_degree(&z, n), 0.75);
        assert_eq!(r_density(&[0.0; 16], n), 0.0);
        assert_eq!(r_degree(&[0.0; 16], n), 0.0);
        let mut full = vec![1.0; 16];
        (0..4).for_each(|i| full[i * 5] = 0.0);
        assert_eq!(r_density(&full, n), 1.0);
        assert_eq!(r_degree(&full, n), 0.75);
    }

    #[test]
    fn tape_entropy_matches_plain_value() {
        let edges = EdgeIndex::complete(5);
        let mut rng = RngStream::new(2, 0);
        let w: Vec<f64> = (0..edges.len()).map(|_| rng.open01()).collect();
        let mut g = Graph::new();
        let z = g.constant(DArray::new(vec![edges.len(), 1], w.clone()).unwrap());
        let h = entropy_var(&mut g, z, &edges).unwrap();
        let plain = graph_entropy(&edges.to_dense(&w), 5).unwrap();
        assert!((g.value(h).values()[0] - plain).abs() < 1e-14);
    }

    #[test]
    fn arithmetic_of_regularized_loss() {
        let edges = EdgeIndex::complete(3);
        let mut g = Graph::new();
        let recon = g.constant(DArray::scalar(1.0));
        // Edges (0->1), (0->2): entropy ln2/ln3, not 0.5, so use density 0.5 instead.
        let w = edges.from_dense(&[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let z = g.constant(DArray::new(vec![6, 1], w).unwrap());
        let out = regularized_loss(&mut g, recon, &[z], &edges, 10.0, PenaltyKind::Density).unwrap();
        assert!((g.value(out).values()[0] - 6.0).abs() < 1e-15);
        let same = regularized_loss(&mut g, recon, &[z], &edges, 0.0, PenaltyKind::Entropy).unwrap();
        assert_eq!(same, recon);
    }

    #[test]
    fn penalty_gradients_match_finite_differences() {
        let edges = EdgeIndex::complete(4);
        let mut rng = RngStream::new(8, 0);
        let logits: Vec<f64> = (0..edges.len()).map(|_| rng.normal()).collect();
        let input = DArray::new(vec![edges.len(), 1], logits).unwrap();
        for kind in [PenaltyKind::Entropy, PenaltyKind::Density, PenaltyKind::Degree] {
            let report = check_gradients(&ParamStore::new(), &input, 24, 4, |g, _, x| {
                let z = g.sigmoid(x);
                let recon = g.constant(DArray::scalar(0.3));
                regularized_loss(g, recon, &[z, z], &edges, 2.0, kind)
            })
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{kind:?} {report:?}");
        }
    }
}
