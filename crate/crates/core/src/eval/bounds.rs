//! Error-accumulation bounds for recursive prediction, and a simulation check of them.

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Setting of the accumulation bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundScenario {
    /// Lipschitz constant of the learned step map.
    pub lipschitz: f64,
    /// Single-step error bound along the true trajectory.
    pub epsilon: f64,
    /// Horizon in steps.
    pub horizon: usize,
    /// Initial gap `||X̂ - X||`.
    pub gap: f64,
}

impl BoundScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz > 0.0) || !(self.epsilon >= 0.0) || self.horizon == 0 || !(self.gap >= 0.0) {
            return Err(Error::Config(format!("invalid bound scenario {self:?}")));
        }
        Ok(())
    }
}

/// `(L^n - 1) / (L - 1)`, equal to `n` at `L = 1`.
pub fn geometric_factor(l: f64, n: usize) -> f64 {
    if (l - 1.0).abs() < 1e-12 {
        n as f64
    } else {
        (l.powi(n as i32) - 1.0) / (l - 1.0)
    }
}

/// `(b1, b2, b3)`: free rollout from the raw prediction, from the mixed input, and between the two.
pub fn deviation_bounds(s: &BoundScenario) -> Result<(f64, f64, f64)> {
    s.validate()?;
    let ln = s.lipschitz.powi(s.horizon as i32);
    let acc = geometric_factor(s.lipschitz, s.horizon) * s.epsilon;
    Ok((ln * s.gap + acc, 0.5 * ln * s.gap + acc, 0.5 * ln * s.gap))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundReport {
    pub trials: usize,
    pub pathwise_violations: usize,
    pub mixed_violations: usize,
    pub imitation_violations: usize,
    pub ordering_violations: usize,
    /// Largest `deviation / bound` seen for the pathwise bound.
    pub worst_pathwise_ratio: f64,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.pathwise_violations + self.mixed_violations + self.imitation_violations + self.ordering_violations == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheckConfig {
    pub trials: usize,
    pub dim: usize,
    pub max_horizon: usize,
    /// Draws of `λ` per trial for the expectation bounds.
    pub lambda_draws: usize,
    pub alpha: f64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        BoundCheckConfig {
            trials: 1000,
            dim: 4,
            max_horizon: 8,
            lambda_draws: 200,
            alpha: 2.0,
        }
    }
}

type Mat = Vec<Vec<f64>>;

fn apply(a: &Mat, b: &[f64], x: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(row, bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() + bi)
        .collect()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Spectral norm by power iteration on `AᵀA`.
pub fn spectral_norm(a: &Mat, rng: &mut RngStream) -> f64 {
    let d = a[0].len();
    let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut sigma = 0.0;
    for _ in 0..500 {
        let av: Vec<f64> = a.iter().map(|row| row.iter().zip(&v).map(|(r, x)| r * x).sum()).collect();
        let mut w = vec![0.0; d];
        for (row, s) in a.iter().zip(&av) {
            for (wj, r) in w.iter_mut().zip(row) {
                *wj += r * s;
            }
        }
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w.into_iter().map(|x| x / nw).collect();
        if (next - sigma).abs() <= 1e-15 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

fn random_unit(d: usize, rng: &mut RngStream) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Deviations of one affine trial, used by the checker and its tests.
#[derive(Clone, Debug)]
pub struct AffineTrial {
    pub a: Mat,
    pub b: Vec<f64>,
    pub lipschitz: f64,
    pub epsilon: f64,
    /// True states `X^t..X^{t+n}`.
    pub truth: Vec<Vec<f64>>,
    pub start: Vec<f64>,
}

impl AffineTrial {
    /// Random `f(x) = Ax + b`; the true trajectory follows `f` plus perturbations of norm at most `ε`.
    pub fn random(dim: usize, horizon: usize, rng: &mut RngStream) -> AffineTrial {
        let scale = rng.uniform(0.3, 1.6);
        let mut a: Mat = (0..dim).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let raw = spectral_norm(&a, rng);
        a.iter_mut().flatten().for_each(|v| *v *= scale / raw);
        let lipschitz = spectral_norm(&a, rng);
        let b: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let epsilon = if rng.bernoulli(0.1) { 0.0 } else { rng.uniform(0.0, 0.2) };
        let mut truth = vec![(0..dim).map(|_| rng.normal()).collect::<Vec<f64>>()];
        for _ in 0..horizon {
            let next = apply(&a, &b, truth.last().expect("nonempty"));
            let e = random_unit(dim, rng);
            let r = epsilon * rng.open01();
            truth.push(next.iter().zip(&e).map(|(x, d)| x + r * d).collect());
        }
        let gap = if rng.bernoulli(0.1) { 0.0 } else { rng.uniform(0.0, 1.0) };
        let dir = random_unit(dim, rng);
        let start = truth[0].iter().zip(&dir).map(|(x, d)| x + gap * d).collect();
        AffineTrial {
            a,
            b,
            lipschitz,
            epsilon,
            truth,
            start,
        }
    }

    pub fn horizon(&self) -> usize {
        self.truth.len() - 1
    }

    pub fn gap(&self) -> f64 {
        dist(&self.start, &self.truth[0])
    }

    /// `f^n(x)`.
    pub fn iterate(&self, x: &[f64], n: usize) -> Vec<f64> {
        (0..n).fold(x.to_vec(), |acc, _| apply(&self.a, &self.b, &acc))
    }

    /// `λ X̂ + (1 - λ) X`.
    pub fn mixed_start(&self, lambda: f64) -> Vec<f64> {
        self.start
            .iter()
            .zip(&self.truth[0])
            .map(|(p, t)| lambda * p + (1.0 - lambda) * t)
            .collect()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

// Relative slack absorbing rounding in the pathwise comparison.
const ROUND_TOL: f64 = 1e-9;

/// Simulates random affine systems and checks the three bounds and their ordering.
pub fn verify_deviation_bounds(rng: &mut RngStream, cfg: &BoundCheckConfig) -> Result<BoundReport> {
    let mut report = BoundReport {
        trials: cfg.trials,
        ..Default::default()
    };
    for _ in 0..cfg.trials {
        let horizon = 1 + rng.index(cfg.max_horizon);
        let trial = AffineTrial::random(cfg.dim, horizon, rng);
        let s = BoundScenario {
            lipschitz: trial.lipschitz,
            epsilon: trial.epsilon,
            horizon,
            gap: trial.gap(),
        };
        let (b1, b2, b3) = deviation_bounds(&s)?;
        if !(b3 <= b2 && b2 <= b1) {
            report.ordering_violations += 1;
        }
        let free = trial.iterate(&trial.start, horizon);
        let d1 = dist(&free, &trial.truth[horizon]);
        let slack = ROUND_TOL * (1.0 + b1);
        if d1 > b1 + slack {
            report.pathwise_violations += 1;
        }
        if b1 > 0.0 {
            report.worst_pathwise_ratio = report.worst_pathwise_ratio.max(d1 / b1);
        }
        let mut d2 = Vec::with_capacity(cfg.lambda_draws);
        let mut d3 = Vec::with_capacity(cfg.lambda_draws);
        for _ in 0..cfg.lambda_draws {
            let lambda = rng.beta(cfg.alpha);
            let mixed = trial.iterate(&trial.mixed_start(lambda), horizon);
            d2.push(dist(&mixed, &trial.truth[horizon]));
            d3.push(dist(&free, &mixed));
        }
        let k = (cfg.lambda_draws as f64).sqrt();
        let (m2, s2) = mean_sd(&d2);
        let (m3, s3) = mean_sd(&d3);
        if m2 > b2 + 3.0 * s2 / k + slack {
            report.mixed_violations += 1;
        }
        if m3 > b3 + 3.0 * s3 / k + slack {
            report.imitation_violations += 1;
        }
    }
    Ok(report)
}
