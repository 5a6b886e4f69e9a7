use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetgraph::data::{generate_synthetic, SyntheticConfig};
use hetgraph::graph::PenaltyKind;
use hetgraph::model::{InputPolicy, Model, ModelConfig};
use hetgraph::numerics::RngStream;
use hetgraph::parallel::{par_map, seq_map};
use hetgraph::train::{scene_gradient, Objective};

fn scene_gradients(c: &mut Criterion) {
    let data = generate_synthetic(&SyntheticConfig {
        n_scenes: 16,
        ..Default::default()
    })
    .unwrap();
    let cfg = ModelConfig {
        hidden: 32,
        edge_dim: 32,
        ..Default::default()
    };
    let model = Model::new(cfg, 5, 10).unwrap();
    let store = model.init_params(0);
    let obj = Objective::Standard {
        policy: InputPolicy::FreeRun,
        gamma: 1e-3,
        penalty: PenaltyKind::Entropy,
    };
    let job = |k: usize| {
        scene_gradient(&model, &store, &data.scenes[k], obj, &RngStream::new(0, k as u64))
            .unwrap()
            .loss
    };

    let mut group = c.benchmark_group("scene_gradients");
    group.sample_size(10);
    for batch in [4usize, 16] {
        group.bench_with_input(BenchmarkId::new("par_map", batch), &batch, |b, &n| {
            b.iter(|| par_map((0..n).collect(), job))
        });
        group.bench_with_input(BenchmarkId::new("seq_map", batch), &batch, |b, &n| {
            b.iter(|| seq_map((0..n).collect(), job))
        });
    }
    group.finish();
}

criterion_group!(benches, scene_gradients);
criterion_main!(benches);
