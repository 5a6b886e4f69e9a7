mod common;

use common::{random_scene, small_config, small_model};
use hetgraph::data::{generate_synthetic, SyntheticConfig};
use hetgraph::graph::PenaltyKind;
use hetgraph::model::{future_squared_error, truth_frames, InputPolicy, Mode, Model, RolloutOptions};
use hetgraph::numerics::testing::check_gradients_where;
use hetgraph::numerics::{DArray, Graph, ParamStore, RngStream};
use hetgraph::train::{build_objective, scene_gradient, train, Objective, Strategy, TrainConfig, TrainData, TrainOutput};
use hetgraph::Error;

fn loss_of(model: &Model, store: &ParamStore, scene: &hetgraph::data::Scene, obj: Objective, rng: &RngStream) -> f64 {
    let (g, loss, _) = build_objective(model, store, scene, obj, rng).unwrap();
    g.value(loss).values()[0]
}

fn standard(policy: InputPolicy, gamma: f64) -> Objective {
    Objective::Standard {
        policy,
        gamma,
        penalty: PenaltyKind::Entropy,
    }
}

#[test]
fn lambda_zero_equals_window_reset_and_one_equals_free_run() {
    let model = small_model(8, 3);
    let store = model.init_params(1);
    let mut rng = RngStream::new(1, 0);
    for k in 0..5 {
        let scene = random_scene(4, 15, 3, &mut rng);
        let r = RngStream::keyed(1, &[k]);
        let mix = |lambda| Objective::MixFirst {
            lambda,
            gamma: 0.0,
            penalty: PenaltyKind::Entropy,
        };
        assert_eq!(
            loss_of(&model, &store, &scene, mix(0.0), &r),
            loss_of(&model, &store, &scene, standard(InputPolicy::WindowReset, 0.0), &r)
        );
        assert_eq!(
            loss_of(&model, &store, &scene, mix(1.0), &r),
            loss_of(&model, &store, &scene, standard(InputPolicy::FreeRun, 0.0), &r)
        );
    }
}

#[test]
fn lambda_one_second_update_is_zero() {
    let model = small_model(8, 3);
    let store = model.init_params(2);
    let scene = random_scene(5, 15, 3, &mut RngStream::new(2, 0));
    let r = scene_gradient(&model, &store, &scene, Objective::MixSecond { lambda: 1.0 }, &RngStream::new(2, 1)).unwrap();
    assert_eq!(r.loss, 0.0);
    assert!(r.grads.values().all(|g| g.values().iter().all(|v| *v == 0.0)));
}

#[test]
fn detached_input_blocks_gradient_exactly() {
    // Probe: p produces the prediction that is mixed into the next input; w reads that input.
    let mut store = ParamStore::new();
    store.insert("p", DArray::new(vec![1, 2], vec![0.7, -0.4]).unwrap());
    store.insert("w", DArray::new(vec![2, 2], vec![0.3, 0.1, -0.5, 0.8]).unwrap());
    let lambda = 0.6;
    let loss = |g: &mut Graph, store: &ParamStore| -> hetgraph::Result<hetgraph::numerics::Var> {
        let p = g.param(store, "p")?;
        let w = g.param(store, "w")?;
        let pred = g.tanh(p);
        let truth = g.constant(DArray::new(vec![1, 2], vec![0.2, 0.5]).unwrap());
        let frozen = g.detach(pred);
        let a = g.scale(frozen, lambda);
        let b = g.scale(truth, 1.0 - lambda);
        let mixed = g.add(a, b)?;
        let out = g.matmul(mixed, w)?;
        let d = g.sub(out, truth)?;
        let sq = g.mul(d, d)?;
        Ok(g.sum(sq))
    };
    let mut g = Graph::new();
    let l = loss(&mut g, &store).unwrap();
    let grads = g.backward(l).unwrap().params(&store);
    assert!(grads["p"].values().iter().all(|v| *v == 0.0));
    assert!(grads["w"].values().iter().any(|v| *v != 0.0));
    let report = check_gradients_where(&store, &DArray::zeros(&[0]), 8, 1, |k| k == "w", |g, s, _| loss(g, s)).unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn second_update_treats_mixed_rollout_as_constant_target() {
    let model = small_model(6, 2);
    let store = model.init_params(3);
    let scene = random_scene(3, 15, 2, &mut RngStream::new(3, 0));
    let rng = RngStream::new(3, 1);
    let lambda = 0.4;
    let got = scene_gradient(&model, &store, &scene, Objective::MixSecond { lambda }, &rng).unwrap();

    // Oracle: record the mixed rollout's values, then regress the free rollout onto them.
    let mut tg = Graph::new();
    let mixed = model
        .rollout(&mut tg, &store, &scene, &RolloutOptions::new(Mode::Train, InputPolicy::Mix(lambda)), &mut rng.clone())
        .unwrap();
    let frozen: Vec<DArray> = (1..15).map(|s| tg.value(mixed.output(s)).clone()).collect();
    let fixed_target = |g: &mut Graph, store: &ParamStore| {
        let mut targets = truth_frames(g, &scene);
        for s in 5..15 {
            targets[s] = g.constant(frozen[s - 1].clone());
        }
        let r = model.rollout(g, store, &scene, &RolloutOptions::new(Mode::Train, InputPolicy::FreeRun), &mut rng.clone())?;
        future_squared_error(g, &r, &model.plan, &targets)
    };
    let mut g = Graph::new();
    let l = fixed_target(&mut g, &store).unwrap();
    assert_eq!(g.value(l).values()[0], got.loss);
    let want = g.backward(l).unwrap().params(&store);
    assert_eq!(want, got.grads);
}

#[test]
fn teacher_forcing_with_zero_increment_is_mean_step_displacement() {
    let model = small_model(8, 3);
    let mut store = model.init_params(4);
    model.decoder.out.zero_last_layer(&mut store);
    let scene = random_scene(4, 15, 3, &mut RngStream::new(4, 0));
    let got = loss_of(&model, &store, &scene, standard(InputPolicy::TeacherForcing, 0.0), &RngStream::new(4, 1));
    let mut sum = 0.0;
    for i in 0..4 {
        for t in 5..15 {
            let (a, b) = (scene.position(i, t), scene.position(i, t - 1));
            sum += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        }
    }
    let want = sum / 40.0;
    assert!((got - want).abs() < 1e-12 * want.max(1.0), "{got} vs {want}");
}

#[test]
fn window_reset_without_future_boundary_is_free_run() {
    let model = Model::new(small_config(8, 3), 10, 5).unwrap();
    let store = model.init_params(5);
    let scene = random_scene(4, 15, 3, &mut RngStream::new(5, 0));
    let r = RngStream::new(5, 1);
    assert_eq!(
        loss_of(&model, &store, &scene, standard(InputPolicy::WindowReset, 0.0), &r),
        loss_of(&model, &store, &scene, standard(InputPolicy::FreeRun, 0.0), &r)
    );
}

#[test]
fn teacher_forcing_loss_is_lower_on_average() {
    let model = small_model(8, 3);
    let store = model.init_params(6);
    let mut rng = RngStream::new(6, 0);
    let (mut tf, mut free) = (0.0, 0.0);
    for k in 0..100 {
        let scene = random_scene(2 + rng.index(4), 15, 3, &mut rng);
        let r = RngStream::keyed(6, &[k]);
        tf += loss_of(&model, &store, &scene, standard(InputPolicy::TeacherForcing, 0.0), &r);
        free += loss_of(&model, &store, &scene, standard(InputPolicy::FreeRun, 0.0), &r);
    }
    assert!(tf <= free, "{tf} vs {free}");
}

#[test]
fn zero_gamma_penalty_is_bit_identical_to_plain() {
    let model = small_model(8, 3);
    let store = model.init_params(7);
    let scene = random_scene(5, 15, 3, &mut RngStream::new(7, 0));
    let r = RngStream::new(7, 1);
    let (g, loss, recon) = build_objective(&model, &store, &scene, standard(InputPolicy::FreeRun, 0.0), &r).unwrap();
    assert_eq!(g.value(loss).values()[0].to_bits(), g.value(recon).values()[0].to_bits());
    let (g2, loss2, _) = build_objective(&model, &store, &scene, standard(InputPolicy::FreeRun, 1e-2), &r).unwrap();
    assert!(g2.value(loss2).values()[0] > g.value(loss).values()[0]);
}

#[test]
fn non_finite_parameters_raise_numerical_error() {
    let model = small_model(8, 3);
    let mut store = model.init_params(8);
    let key = store.keys().find(|k| k.starts_with("dec.out")).unwrap().to_string();
    store.get_mut(&key).unwrap().values_mut()[0] = f64::NAN;
    let scene = random_scene(3, 15, 3, &mut RngStream::new(8, 0));
    let err = scene_gradient(&model, &store, &scene, standard(InputPolicy::FreeRun, 0.0), &RngStream::new(8, 1));
    assert!(matches!(err, Err(Error::Numerical(_))));
}

struct Tiny {
    scenes: Vec<hetgraph::data::Scene>,
    normalizer: hetgraph::data::Normalizer,
}

fn tiny_data(n: usize) -> Tiny {
    let cfg = SyntheticConfig {
        n_scenes: n,
        min_agents: 3,
        max_agents: 4,
        seed: 11,
        ..Default::default()
    };
    let d = generate_synthetic(&cfg).unwrap();
    Tiny {
        scenes: d.scenes,
        normalizer: d.normalizer,
    }
}

fn tiny_cfg(strategy: Strategy, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 1e-2,
        strategy,
        val_samples: 1,
        seed: 3,
        ..Default::default()
    }
}

fn run(data: &Tiny, cfg: &TrainConfig, out: Option<&TrainOutput>) -> hetgraph::train::TrainOutcome {
    let model = small_model(8, 3);
    let td = TrainData {
        train: &data.scenes[..8],
        val: &data.scenes[8..],
        normalizer: data.normalizer,
    };
    train(&model, cfg, &td, out).unwrap()
}

#[test]
fn smoke_run_writes_loadable_checkpoints() {
    let data = tiny_data(10);
    let dir = tempfile::tempdir().unwrap();
    let out = TrainOutput {
        dir: dir.path().to_path_buf(),
        resume: false,
    };
    let outcome = run(&data, &tiny_cfg(Strategy::GeMixup, 2), Some(&out));
    assert_eq!(outcome.log.len(), 2);
    let best = ParamStore::load(out.best()).unwrap();
    assert_eq!(best, outcome.best_params);
    let log = std::fs::read_to_string(out.log()).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().nth(1).unwrap().contains(",GE_mixup,"));
}

#[test]
fn same_seed_same_checkpoint_bytes() {
    let data = tiny_data(10);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let bytes: Vec<(Vec<u8>, String)> = dirs
        .iter()
        .map(|d| {
            let out = TrainOutput {
                dir: d.path().to_path_buf(),
                resume: false,
            };
            run(&data, &tiny_cfg(Strategy::Mixup, 2), Some(&out));
            (std::fs::read(out.last()).unwrap(), std::fs::read_to_string(out.log()).unwrap())
        })
        .collect();
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = tiny_data(10);
    let straight = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let out_a = TrainOutput {
        dir: straight.path().to_path_buf(),
        resume: false,
    };
    let full = run(&data, &tiny_cfg(Strategy::GeMixup, 3), Some(&out_a));
    let mut out_b = TrainOutput {
        dir: split.path().to_path_buf(),
        resume: false,
    };
    run(&data, &tiny_cfg(Strategy::GeMixup, 2), Some(&out_b));
    out_b.resume = true;
    let resumed = run(&data, &tiny_cfg(Strategy::GeMixup, 3), Some(&out_b));
    assert_eq!(resumed.log.len(), 1);
    assert_eq!(resumed.log[0].epoch, 2);
    assert_eq!(resumed.params, full.params);
    assert_eq!(std::fs::read(out_a.last()).unwrap(), std::fs::read(out_b.last()).unwrap());
    assert_eq!(
        std::fs::read_to_string(out_a.log()).unwrap(),
        std::fs::read_to_string(out_b.log()).unwrap()
    );
}

#[test]
fn zero_gamma_ge_training_matches_plain() {
    let data = tiny_data(10);
    let plain = run(&data, &tiny_cfg(Strategy::Plain, 2), None);
    let ge = run(
        &data,
        &TrainConfig {
            gamma: 0.0,
            ..tiny_cfg(Strategy::Ge, 2)
        },
        None,
    );
    assert_eq!(plain.params, ge.params);
}

#[test]
fn gamma_reaches_the_epoch_log() {
    let data = tiny_data(10);
    let out = run(
        &data,
        &TrainConfig {
            gamma: 0.02,
            ..tiny_cfg(Strategy::Ge, 1)
        },
        None,
    );
    assert_eq!(out.log[0].gamma, 0.02);
    assert!(out.log[0].csv_row().contains(",0.02"));
}

#[test]
fn plain_training_lowers_train_loss() {
    let data = tiny_data(10);
    let out = run(&data, &tiny_cfg(Strategy::Plain, 50), None);
    let first = out.log[0].train_loss;
    let last = out.log[49].train_loss;
    assert!(last < first, "{first} -> {last}");
}
