#![allow(dead_code)]

use hetgraph::data::Scene;
use hetgraph::model::{Model, ModelConfig};
use hetgraph::numerics::RngStream;

/// Scene with smooth random walks inside `[-1, 1]`.
pub fn random_scene(n: usize, steps: usize, categories: usize, rng: &mut RngStream) -> Scene {
    let cats = (0..n).map(|i| if i < categories { i } else { rng.index(categories) }).collect();
    let mut pos = Vec::with_capacity(n * steps * 2);
    for _ in 0..n {
        let mut p = [rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)];
        let v = [rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)];
        for _ in 0..steps {
            pos.extend_from_slice(&p);
            p[0] = (p[0] + v[0] + 0.005 * rng.normal()).clamp(-1.0, 1.0);
            p[1] = (p[1] + v[1] + 0.005 * rng.normal()).clamp(-1.0, 1.0);
        }
    }
    Scene::new("r", cats, steps, pos).unwrap()
}

pub fn small_config(hidden: usize, categories: usize) -> ModelConfig {
    ModelConfig {
        hidden,
        edge_dim: hidden,
        num_categories: categories,
        ..ModelConfig::default()
    }
}

pub fn small_model(hidden: usize, categories: usize) -> Model {
    Model::new(small_config(hidden, categories), 5, 10).unwrap()
}
