//! Hard-graph selection from edge probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::graph_entropy;

/// Largest uncertain set decided by enumerating all subsets.
pub const EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    /// Lowest graph entropy.
    #[default]
    Entropy,
    /// Closest in l1 to the previous graph.
    Similarity,
}

impl std::str::FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Heuristic::Entropy),
            "similarity" => Ok(Heuristic::Similarity),
            _ => Err(Error::Config(format!("unknown heuristic `{s}` (entropy|similarity)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Dense `N x N` 0/1 adjacency.
    pub z: Vec<f64>,
    /// Ordered pairs `(i, j)` whose probability fell in `[θ_low, θ_high]`.
    pub uncertain: Vec<(usize, usize)>,
    pub exhaustive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { low: 0.2, high: 0.8 }
    }
}

/// Every off-diagonal pair with `p > high` is kept, `p < low` dropped, the rest chosen by `heuristic`.
///
/// Ties in the objective go to the completion keeping more edges.
pub fn select_graph(
    probs: &[f64],
    n: usize,
    previous: Option<&[f64]>,
    th: Thresholds,
    heuristic: Heuristic,
) -> Result<Selection> {
    if probs.len() != n * n {
        return Err(Error::Shape(format!("{} probabilities for N = {n}", probs.len())));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Contract("edge probabilities must lie in [0, 1]".into()));
    }
    if !(th.low <= th.high) {
        return Err(Error::Config(format!("θ_low {} exceeds θ_high {}", th.low, th.high)));
    }
    let prev = match (heuristic, previous) {
        (Heuristic::Similarity, None) => {
            return Err(Error::Config("similarity heuristic needs a previous graph".into()))
        }
        (_, Some(p)) if p.len() != n * n => return Err(Error::Shape("previous graph must be N x N".into())),
        (_, p) => p,
    };
    let mut z = vec![0.0; n * n];
    let mut uncertain = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let p = probs[i * n + j];
            if i == j || p < th.low {
                continue;
            }
            if p > th.high {
                z[i * n + j] = 1.0;
            } else {
                uncertain.push((i, j));
            }
        }
    }
    let score = |z: &[f64]| -> Result<f64> {
        match heuristic {
            Heuristic::Entropy => graph_entropy(z, n),
            Heuristic::Similarity => {
                let prev = prev.expect("checked above");
                Ok(z.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum())
            }
        }
    };

    let exhaustive = uncertain.len() <= EXHAUSTIVE_LIMIT;
    if exhaustive {
        let mut best: Option<(f64, u32, u32)> = None;
        let mut work = z.clone();
        for mask in 0u32..(1u32 << uncertain.len()) {
            for (b, &(i, j)) in uncertain.iter().enumerate() {
                work[i * n + j] = f64::from((mask >> b) & 1);
            }
            let s = score(&work)?;
            let kept = mask.count_ones();
            let better = match best {
                None => true,
                Some((bs, bk, _)) => s < bs || (s == bs && kept > bk),
            };
            if better {
                best = Some((s, kept, mask));
            }
        }
        let (_, _, mask) = best.expect("at least the empty completion");
        for (b, &(i, j)) in uncertain.iter().enumerate() {
            z[i * n + j] = f64::from((mask >> b) & 1);
        }
    } else {
        log::warn!(
            "{} uncertain edges exceed the exhaustive limit {EXHAUSTIVE_LIMIT}; selecting greedily",
            uncertain.len()
        );
        let mut order = uncertain.clone();
        order.sort_by(|a, b| probs[b.0 * n + b.1].total_cmp(&probs[a.0 * n + a.1]));
        for (i, j) in order {
            let without = score(&z)?;
            z[i * n + j] = 1.0;
            if score(&z)? > without {
                z[i * n + j] = 0.0;
            }
        }
    }
    Ok(Selection { z, uncertain, exhaustive })
}
