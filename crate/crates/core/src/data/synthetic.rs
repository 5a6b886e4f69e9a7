//! Spring-coupled particle scenes with per-category coupling and damping.

use serde::{Deserialize, Serialize};

use super::normalize::Normalizer;
use super::scene::Scene;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::parallel::par_map;

/// Raw positions beyond this magnitude mean the integrator blew up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_scenes: usize,
    pub min_agents: usize,
    pub max_agents: usize,
    pub num_categories: usize,
    pub history: usize,
    pub future: usize,
    /// `coupling[c_i][c_j]`: spring constant of an edge from a category `c_i` agent into a category `c_j` agent.
    pub coupling: Vec<Vec<f64>>,
    /// Velocity damping per receiving category.
    pub damping: Vec<f64>,
    pub edge_prob: f64,
    pub dt: f64,
    /// Initial positions are uniform in `[-extent, extent]^2`.
    pub init_extent: f64,
    /// Standard deviation of initial velocity components.
    pub init_speed: f64,
    pub seed: u64,
    /// Train/val/test fractions used when the dataset is written out.
    pub split: [f64; 3],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_scenes: 200,
            min_agents: 4,
            max_agents: 8,
            num_categories: 3,
            history: 5,
            future: 10,
            coupling: vec![
                vec![0.6, 0.2, 1.2],
                vec![1.0, 0.3, 1.5],
                vec![0.4, 0.1, 0.8],
            ],
            damping: vec![0.1, 0.5, 0.02],
            edge_prob: 0.3,
            dt: 0.1,
            init_extent: 5.0,
            init_speed: 1.0,
            seed: 0,
            split: super::split::DEFAULT_SPLIT,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self.num_categories;
        let bad = |m: String| Err(Error::Config(m));
        if c == 0 {
            return bad("num_categories must be positive".into());
        }
        if self.min_agents < 2 || self.max_agents < self.min_agents {
            return bad(format!("agent range [{}, {}] invalid (need 2 <= min <= max)", self.min_agents, self.max_agents));
        }
        if self.history + self.future < 2 {
            return bad("need at least two steps per scene".into());
        }
        if self.coupling.len() != c || self.coupling.iter().any(|r| r.len() != c) {
            return bad(format!("coupling must be {c} x {c}"));
        }
        if self.damping.len() != c {
            return bad(format!("damping needs {c} entries"));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad("edge_prob must lie in [0, 1]".into());
        }
        if !(self.dt > 0.0) || !(self.init_extent > 0.0) || !(self.init_speed >= 0.0) {
            return bad("dt and init_extent must be positive, init_speed nonnegative".into());
        }
        let finite = self.coupling.iter().flatten().chain(&self.damping).all(|v| v.is_finite());
        if !finite {
            return bad("coupling and damping must be finite".into());
        }
        super::split::check_fractions(self.split)
    }

    pub fn steps(&self) -> usize {
        self.history + self.future
    }
}

/// One simulated scene in source units, with velocities kept for diagnostics.
#[derive(Clone, Debug)]
pub struct RawSimulation {
    pub categories: Vec<usize>,
    pub graph: Vec<bool>,
    /// `[step][agent][x, y]`
    pub positions: Vec<Vec<[f64; 2]>>,
    pub velocities: Vec<Vec<[f64; 2]>>,
}

impl RawSimulation {
    pub fn into_scene(self, scene_id: String) -> Result<Scene> {
        let n = self.categories.len();
        let steps = self.positions.len();
        let mut flat = Vec::with_capacity(n * steps * 2);
        for i in 0..n {
            for frame in &self.positions {
                flat.extend_from_slice(&frame[i]);
            }
        }
        Scene::new(scene_id, self.categories, steps, flat)?.with_truth_graph(self.graph)
    }
}

/// Draws scene `index`'s agents and graph, then integrates with semi-implicit Euler.
pub fn simulate_scene(cfg: &SyntheticConfig, index: usize) -> Result<RawSimulation> {
    let mut rng = RngStream::keyed(cfg.seed, &[0x5CE4E, index as u64]);
    let n = cfg.min_agents + rng.index(cfg.max_agents - cfg.min_agents + 1);
    let categories: Vec<usize> = (0..n)
        .map(|i| if i == 0 { index % cfg.num_categories } else { rng.index(cfg.num_categories) })
        .collect();
    let mut graph = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                graph[i * n + j] = rng.bernoulli(cfg.edge_prob);
            }
        }
    }
    let mut x: Vec<[f64; 2]> = (0..n)
        .map(|_| [rng.uniform(-cfg.init_extent, cfg.init_extent), rng.uniform(-cfg.init_extent, cfg.init_extent)])
        .collect();
    let mut v: Vec<[f64; 2]> = (0..n).map(|_| [cfg.init_speed * rng.normal(), cfg.init_speed * rng.normal()]).collect();
    let mut positions = vec![x.clone()];
    let mut velocities = vec![v.clone()];
    for step in 1..cfg.steps() {
        let accel = accelerations(cfg, &categories, &graph, &x, &v);
        for j in 0..n {
            for d in 0..2 {
                v[j][d] += cfg.dt * accel[j][d];
                x[j][d] += cfg.dt * v[j][d];
            }
            if x[j].iter().any(|p| !(p.abs() <= BLOWUP_LIMIT)) {
                return Err(Error::Generation(format!(
                    "scene {index} diverged at step {step} (|position| > {BLOWUP_LIMIT}); lower dt or coupling"
                )));
            }
        }
        positions.push(x.clone());
        velocities.push(v.clone());
    }
    Ok(RawSimulation {
        categories,
        graph,
        positions,
        velocities,
    })
}

fn accelerations(
    cfg: &SyntheticConfig,
    categories: &[usize],
    graph: &[bool],
    x: &[[f64; 2]],
    v: &[[f64; 2]],
) -> Vec<[f64; 2]> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let cj = categories[j];
            let mut a = [-cfg.damping[cj] * v[j][0], -cfg.damping[cj] * v[j][1]];
            for i in (0..n).filter(|&i| graph[i * n + j]) {
                let k = cfg.coupling[categories[i]][cj];
                a[0] += k * (x[i][0] - x[j][0]);
                a[1] += k * (x[i][1] - x[j][1]);
            }
            a
        })
        .collect()
}

/// Generated scenes in normalized coordinates plus the bounds used.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub scenes: Vec<Scene>,
    pub normalizer: Normalizer,
}

/// Simulates `cfg.n_scenes` scenes and normalizes them with bounds fitted over the whole set.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let raw: Vec<Scene> = par_map((0..cfg.n_scenes).collect(), |k| {
        simulate_scene(cfg, k)?.into_scene(format!("syn{k:05}"))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let normalizer = Normalizer::fit(&raw)?;
    let scenes = raw.iter().map(|s| normalizer.normalize(s)).collect::<Result<_>>()?;
    Ok(SyntheticDataset { scenes, normalizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_edges_means_straight_damped_lines() {
        let cfg = SyntheticConfig {
            edge_prob: 0.0,
            n_scenes: 6,
            ..Default::default()
        };
        for k in 0..cfg.n_scenes {
            let sim = simulate_scene(&cfg, k).unwrap();
            assert!(sim.graph.iter().all(|e| !e));
            let n = sim.categories.len();
            for j in 0..n {
                // Heading stays fixed: every displacement is parallel to the first.
                let d0 = sub(sim.positions[1][j], sim.positions[0][j]);
                for t in 1..cfg.steps() - 1 {
                    let d = sub(sim.positions[t + 1][j], sim.positions[t][j]);
                    let cross = d0[0] * d[1] - d0[1] * d[0];
                    assert!(cross.abs() < 1e-12);
                    let damp = 1.0 - cfg.dt * cfg.damping[sim.categories[j]];
                    let ratio = norm(d) / norm(sub(sim.positions[t][j], sim.positions[t - 1][j]));
                    assert!((ratio - damp).abs() < 1e-9);
                }
            }
        }
    }

    fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }

    fn norm(a: [f64; 2]) -> f64 {
        a[0].hypot(a[1])
    }

    #[test]
    fn symmetric_pair_conserves_momentum() {
        let cfg = SyntheticConfig {
            min_agents: 2,
            max_agents: 2,
            num_categories: 1,
            coupling: vec![vec![1.3]],
            damping: vec![0.0],
            edge_prob: 1.0,
            history: 5,
            future: 40,
            ..Default::default()
        };
        let sim = simulate_scene(&cfg, 0).unwrap();
        let momentum = |t: usize| {
            let v = &sim.velocities[t];
            [v[0][0] + v[1][0], v[0][1] + v[1][1]]
        };
        for t in 1..cfg.steps() {
            let (a, b) = (momentum(t - 1), momentum(t));
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_scenes() {
        let cfg = SyntheticConfig {
            n_scenes: 12,
            ..Default::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.scenes, b.scenes);
        assert_eq!(a.normalizer, b.normalizer);
    }

    #[test]
    fn graphs_have_no_self_loops_and_categories_cover() {
        let cfg = SyntheticConfig {
            n_scenes: 30,
            ..Default::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let mut seen = vec![false; cfg.num_categories];
        for s in &data.scenes {
            let n = s.num_agents();
            let g = s.truth_graph.as_ref().unwrap();
            assert!((0..n).all(|i| !g[i * n + i]));
            assert!(s.is_normalized());
            s.categories.iter().for_each(|&c| seen[c] = true);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = SyntheticConfig {
            coupling: vec![vec![-5000.0; 3]; 3],
            edge_prob: 1.0,
            dt: 1.0,
            future: 60,
            n_scenes: 1,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Generation(_))));
    }
}
