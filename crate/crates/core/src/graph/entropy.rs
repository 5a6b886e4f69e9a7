//! In-degree graph entropy, its closed-form minimum, and majorization.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Tolerance for "equal sums" when comparing vectors under majorization.
pub const SUM_TOL: f64 = 1e-9;

/// Normalized in-degree vector of a (possibly relaxed) adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution {
    pub degrees: Vec<f64>,
    pub total: f64,
    pub p: Vec<f64>,
}

/// `d_j = Σ_i z[i][j]` over a dense row-major `N x N` matrix.
pub fn in_degrees(z: &[f64], n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d[j] += z[i * n + j];
            }
        }
    }
    d
}

fn check_adjacency(z: &[f64], n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Contract(format!("graph entropy needs N >= 2, got {n}")));
    }
    if z.len() != n * n {
        return Err(Error::Shape(format!("adjacency has {} entries for N = {n}", z.len())));
    }
    if (0..n).any(|i| z[i * n + i] != 0.0) {
        return Err(Error::Contract("adjacency diagonal must be zero".into()));
    }
    if z.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Contract("adjacency entries must be nonnegative".into()));
    }
    Ok(())
}

pub fn degree_distribution(z: &[f64], n: usize) -> Result<DegreeDistribution> {
    check_adjacency(z, n)?;
    let degrees = in_degrees(z, n);
    let total: f64 = degrees.iter().sum();
    let p = if total > 0.0 {
        degrees.iter().map(|d| d / total).collect()
    } else {
        vec![0.0; n]
    };
    Ok(DegreeDistribution { degrees, total, p })
}

/// `Σ φ(u)` with `φ(u) = -u ln u` and `φ(0) = 0`.
pub fn phi_sum(x: &[f64]) -> f64 {
    -x.iter().filter(|&&u| u > 0.0).map(|&u| u * u.ln()).sum::<f64>()
}

/// Entropy of the in-degree distribution over `d.len()` nodes, scaled to `[0, 1]`.
///
/// Evaluated as `Σ_groups (count · d) ln(|E| / d) / (|E| ln N)` with equal
/// degrees grouped, so uniform degrees give exactly 1 and a single hub exactly 0.
pub fn entropy_from_degrees(d: &[f64]) -> f64 {
    let total: f64 = d.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted: Vec<f64> = d.iter().copied().filter(|&v| v > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut numerator = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let v = sorted[k];
        let count = sorted[k..].iter().take_while(|&&u| u == v).count();
        numerator += (count as f64 * v) * (total / v).ln();
        k += count;
    }
    numerator / (total * (d.len() as f64).ln())
}

/// Graph entropy of a dense adjacency; zero for an empty graph.
pub fn graph_entropy(z: &[f64], n: usize) -> Result<f64> {
    check_adjacency(z, n)?;
    Ok(entropy_from_degrees(&in_degrees(z, n)))
}

/// Smallest graph entropy over simple directed graphs with `n` nodes and `edges` edges.
///
/// The minimizer packs `k` nodes with the full in-degree `N - 1` and puts the
/// remaining `e` edges on one more node, where `edges = k (N - 1) + e`.
pub fn min_graph_entropy(n: usize, edges: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Contract(format!("N must be at least 2, got {n}")));
    }
    let cap = n - 1;
    if edges > n * cap {
        return Err(Error::Contract(format!("{edges} edges exceed N(N-1) = {}", n * cap)));
    }
    if edges <= cap {
        return Ok(0.0);
    }
    let (k, e) = (edges / cap, edges % cap);
    let total = edges as f64;
    let full = k as f64 * cap as f64 / total * (total / cap as f64).ln();
    let rest = if e == 0 {
        0.0
    } else {
        let q = e as f64 / total;
        -q * q.ln()
    };
    Ok((full + rest) / (n as f64).ln())
}

/// Minimum entropy for every edge count `0..=N(N-1)`, by enumerating all
/// in-degree vectors with entries in `[0, N-1]`.
pub fn brute_force_min_entropy(n: usize) -> Vec<f64> {
    let cap = n - 1;
    let mut best = vec![f64::INFINITY; n * cap + 1];
    let mut d = vec![0usize; n];
    loop {
        let total: usize = d.iter().sum();
        let degrees: Vec<f64> = d.iter().map(|&v| v as f64).collect();
        let h = entropy_from_degrees(&degrees);
        if h < best[total] {
            best[total] = h;
        }
        // Odometer increment over {0..=cap}^n.
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            if d[pos] < cap {
                d[pos] += 1;
                break;
            }
            d[pos] = 0;
            pos += 1;
        }
    }
}

fn sorted_desc(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Whether `x` majorizes `y`: every descending prefix sum of `x` is at least that of `y`.
pub fn majorizes(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {} differ", x.len(), y.len())));
    }
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    if (sx - sy).abs() > SUM_TOL {
        return Err(Error::Contract(format!("sums {sx} and {sy} differ")));
    }
    let (xs, ys) = (sorted_desc(x), sorted_desc(y));
    let (mut px, mut py) = (0.0, 0.0);
    for k in 0..xs.len() {
        px += xs[k];
        py += ys[k];
        if px < py - SUM_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Checks `Σ φ(x) <= Σ φ(y)` for a majorizing pair on the simplex.
pub fn verify_hlp(x: &[f64], y: &[f64]) -> Result<bool> {
    if !majorizes(x, y)? {
        return Err(Error::Contract("first argument must majorize the second".into()));
    }
    Ok(phi_sum(x) <= phi_sum(y) + SUM_TOL)
}

/// Random point on the simplex, then a sequence of Robin-Hood transfers
/// (move part of the gap from a richer to a poorer entry). Each transfer
/// yields a vector majorized by its input, so `x` majorizes `y`.
pub fn robin_hood_pair(n: usize, transfers: usize, rng: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
    let raw: Vec<f64> = (0..n).map(|_| -rng.open01().ln()).collect();
    let s: f64 = raw.iter().sum();
    let x: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let mut y = x.clone();
    for _ in 0..transfers {
        let (a, b) = (rng.index(n), rng.index(n));
        let (rich, poor) = if y[a] >= y[b] { (a, b) } else { (b, a) };
        let amount = rng.uniform(0.0, 1.0) * 0.5 * (y[rich] - y[poor]);
        y[rich] -= amount;
        y[poor] += amount;
    }
    (x, y)
}
