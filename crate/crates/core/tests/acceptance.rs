//! End-to-end acceptance checks. Runs every criterion, prints one line each
//! and exits non-zero if any failed. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 2 5`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use hetgraph::data::{generate_synthetic, split_scenes, Normalizer, Scene, SyntheticConfig, DEFAULT_SPLIT};
use hetgraph::eval::{
    ade_fde, entropy_table, evaluate_dataset, majorization_check, reconstruction_loss,
    sampled_metrics, select_graph, verify_deviation_bounds, BoundCheckConfig, Heuristic, Thresholds,
    EXHAUSTIVE_LIMIT,
};
use hetgraph::eval::report::{category_csv, metrics_csv, RunLabel};
use hetgraph::graph::penalty::entropy_var;
use hetgraph::graph::{graph_entropy, EdgeIndex, PenaltyKind};
use hetgraph::model::{
    future_squared_error, sample_relations, truth_frames, CategoryGroups, InputPolicy, Mode, Model, ModelConfig,
    RelationMode, RolloutOptions,
};
use hetgraph::numerics::testing::{check_gradients, random_array, GradCheckReport};
use hetgraph::numerics::{DArray, Graph, ParamStore, RngStream, Var};
use hetgraph::train::{
    build_objective, objective_on, scene_gradient, train, Objective, Strategy, TrainConfig, TrainData, TrainOutcome,
    TrainOutput,
};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn model_with(hidden: usize, categories: usize) -> Model {
    let cfg = ModelConfig {
        hidden,
        edge_dim: hidden,
        num_categories: categories,
        ..ModelConfig::default()
    };
    Model::new(cfg, 5, 10).unwrap()
}

fn random_scene(n: usize, categories: usize, rng: &mut RngStream) -> Scene {
    let cats = (0..n).map(|i| if i < categories { i } else { rng.index(categories) }).collect();
    let mut pos = Vec::with_capacity(n * 30);
    for _ in 0..n {
        let mut p = [rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)];
        let v = [rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)];
        for _ in 0..15 {
            pos.extend_from_slice(&p);
            p[0] = (p[0] + v[0] + 0.005 * rng.normal()).clamp(-1.0, 1.0);
            p[1] = (p[1] + v[1] + 0.005 * rng.normal()).clamp(-1.0, 1.0);
        }
    }
    Scene::new("a", cats, 15, pos).unwrap()
}

fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> hetgraph::Result<Var> {
    let shape = g.shape(v).to_vec();
    let w = g.constant(random_array(&shape, &mut RngStream::new(seed, 99)));
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn gradient_suite() -> Outcome {
    const PROBES: usize = 30;
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let model = model_with(8, 3);
    let store = model.init_params(1);
    let mut rng = RngStream::new(1, 0);
    let edges = EdgeIndex::complete(4);
    let mut results: Vec<(&str, GradCheckReport)> = Vec::new();

    let x = random_array(&[4, 10], &mut rng);
    let r = check_gradients(&store, &x, PROBES, 1, |g, s, x| {
        let nodes = model.encoder.embed_window(g, s, x, true)?;
        let emb = model.encoder.gnn_pass(g, s, nodes, &edges, true)?;
        let state = model.encoder.zero_state(g, &edges);
        let (logits, _) = model.encoder.update_relations(g, s, emb.edges, &state, true)?;
        let a = weighted_sum(g, emb.edges, 1)?;
        let b = weighted_sum(g, logits, 2)?;
        g.add(a, b)
    });
    results.push(("encoder gnn", r.unwrap()));

    let pairs6 = EdgeIndex::complete(6);
    let logits = random_array(&[30, 1], &mut rng);
    let r = check_gradients(&ParamStore::new(), &logits, PROBES, 2, |g, _, x| {
        let z = sample_relations(g, x, 0.5, RelationMode::Relaxed, &mut RngStream::new(3, 0))?;
        weighted_sum(g, z, 3)
    });
    results.push(("gumbel-sigmoid", r.unwrap()));

    let groups = CategoryGroups::new(&[0, 1, 2, 1], 3).unwrap();
    let z_vals = DArray::new(vec![12, 1], (0..12).map(|_| rng.uniform(0.55, 0.95)).collect()).unwrap();
    let feats = random_array(&[12, 8], &mut rng);
    let h = random_array(&[4, 8], &mut rng);
    let r = check_gradients(&store, &h, PROBES, 3, |g, s, h| {
        let z = g.constant(z_vals.clone());
        let f = g.constant(feats.clone());
        let graph = model.decoder.prepare_graph(g, s, z, f, &edges)?;
        let m = model.decoder.ham_aggregate(g, s, h, &groups, &graph)?;
        weighted_sum(g, m, 4)
    });
    results.push(("attention", r.unwrap()));

    let inputs = random_array(&[4, 2], &mut rng);
    let r = check_gradients(&store, &inputs, PROBES, 4, |g, s, x| {
        let z = g.constant(z_vals.clone());
        let f = g.constant(feats.clone());
        let graph = model.decoder.prepare_graph(g, s, z, f, &edges)?;
        let state = model.decoder.zero_state(g, 4);
        let mut r = RngStream::new(5, 0);
        let (state, mu) = model.decoder.step(g, s, &state, &groups, &graph, x, false, &mut r)?;
        let (state, mu2) = model.decoder.step(g, s, &state, &groups, &graph, mu, false, &mut r)?;
        let a = weighted_sum(g, mu2, 5)?;
        let b = weighted_sum(g, state.hidden[0], 6)?;
        g.add(a, b)
    });
    results.push(("category grus", r.unwrap()));

    let relaxed = DArray::new(vec![30, 1], (0..30).map(|_| rng.uniform(0.1, 0.9)).collect()).unwrap();
    let r = check_gradients(&ParamStore::new(), &relaxed, PROBES, 5, |g, _, z| entropy_var(g, z, &pairs6));
    results.push(("entropy penalty", r.unwrap()));

    let scene = random_scene(4, 3, &mut rng);
    // Free-running reconstruction plus entropy penalty; the mixup objectives stop gradients on purpose.
    let obj = Objective::Standard {
        policy: InputPolicy::FreeRun,
        gamma: 1e-2,
        penalty: PenaltyKind::Entropy,
    };
    let step_rng = RngStream::new(6, 0);
    let r = check_gradients(&store, &DArray::zeros(&[0]), PROBES, 6, |g, s, _| {
        Ok(objective_on(g, &model, s, &scene, obj, &step_rng)?.0)
    });
    results.push(("full loss", r.unwrap()));

    let elapsed = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max);
    let enough = results.iter().all(|(_, r)| r.probes >= 20);
    let detail = results
        .iter()
        .map(|(name, r)| format!("{name} {:.1e}", r.max_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        worst < TOL && enough && elapsed < 120.0,
        format!("max rel error {detail} (tol {TOL:.0e}); {elapsed:.1}s"),
    )
}

fn entropy_minimum() -> Outcome {
    let start = Instant::now();
    let rows = entropy_table(6).map_err(|e| e.to_string())?;
    let mismatched = rows.iter().filter(|r| !r.matches).count();
    let drops = rows.iter().filter(|r| !r.monotone).count();
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        mismatched == 0 && drops == 0 && elapsed < 60.0 && rows.len() == (2..=6).map(|n| n * (n - 1) + 1).sum::<usize>(),
        format!("{} (N, |E|) rows, {mismatched} mismatches, {drops} decreases; {elapsed:.1}s", rows.len()),
    )
}

fn majorization() -> Outcome {
    let r = majorization_check(1000, &mut RngStream::new(3, 0)).map_err(|e| e.to_string())?;
    verdict(r.pairs == 1000 && r.violations == 0, format!("{} pairs, {} violations", r.pairs, r.violations))
}

fn deviation_bounds() -> Outcome {
    let cfg = BoundCheckConfig::default();
    let r = verify_deviation_bounds(&mut RngStream::new(4, 0), &cfg).map_err(|e| e.to_string())?;
    verdict(
        r.trials == 1000 && r.passed(),
        format!(
            "{} trials: pathwise {}, mixed {}, imitation {}, ordering {} violations",
            r.trials, r.pathwise_violations, r.mixed_violations, r.imitation_violations, r.ordering_violations
        ),
    )
}

fn entropy_extremes() -> Outcome {
    let (mut uniform, mut hubs, mut bad) = (0, 0, Vec::new());
    for n in 2..=8 {
        // Circulant graphs: every node receives exactly k edges.
        for k in 1..n {
            let mut z = vec![0.0; n * n];
            for i in 0..n {
                for s in 1..=k {
                    z[i * n + (i + s) % n] = 1.0;
                }
            }
            let h = graph_entropy(&z, n).unwrap();
            uniform += 1;
            if h != 1.0 {
                bad.push(format!("uniform n={n} k={k} H={h}"));
            }
        }
        for hub in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != hub).collect();
            for mask in 1u32..(1 << others.len()) {
                let mut z = vec![0.0; n * n];
                for (b, &i) in others.iter().enumerate() {
                    if mask >> b & 1 == 1 {
                        z[i * n + hub] = 1.0;
                    }
                }
                let h = graph_entropy(&z, n).unwrap();
                hubs += 1;
                if h != 0.0 {
                    bad.push(format!("hub n={n} mask={mask:b} H={h}"));
                }
            }
        }
    }
    verdict(
        bad.is_empty(),
        format!("{uniform} uniform graphs, {hubs} hub graphs, failures: {bad:?}"),
    )
}

fn tiny_dataset(n_scenes: usize, seed: u64) -> (Vec<Scene>, Vec<Scene>, Vec<Scene>, Normalizer) {
    let ds = generate_synthetic(&SyntheticConfig {
        n_scenes,
        seed,
        ..Default::default()
    })
    .unwrap();
    let s = split_scenes(ds.scenes, DEFAULT_SPLIT).unwrap();
    (s.train, s.val, s.test, ds.normalizer)
}

fn mixup_mechanics() -> Outcome {
    let model = model_with(8, 3);
    let store = model.init_params(5);
    let mut rng = RngStream::new(5, 0);
    let mix = |lambda| Objective::MixFirst {
        lambda,
        gamma: 0.0,
        penalty: PenaltyKind::Entropy,
    };
    let std_obj = |policy| Objective::Standard {
        policy,
        gamma: 0.0,
        penalty: PenaltyKind::Entropy,
    };
    let loss = |scene: &Scene, obj, r: &RngStream| {
        let (g, l, _) = build_objective(&model, &store, scene, obj, r).unwrap();
        g.value(l).values()[0]
    };
    let (mut zero_ok, mut one_ok, mut second_ok, mut isolated) = (true, true, true, true);
    for k in 0..10 {
        let scene = random_scene(4, 3, &mut rng);
        let r = RngStream::keyed(5, &[k]);
        zero_ok &= loss(&scene, mix(0.0), &r).to_bits() == loss(&scene, std_obj(InputPolicy::WindowReset), &r).to_bits();
        one_ok &= loss(&scene, mix(1.0), &r).to_bits() == loss(&scene, std_obj(InputPolicy::FreeRun), &r).to_bits();
        let second = scene_gradient(&model, &store, &scene, Objective::MixSecond { lambda: 1.0 }, &r).unwrap();
        second_ok &= second.loss == 0.0;

        // The second update's target must act as a constant: compare with an explicitly frozen target.
        let lambda = 0.35;
        let got = scene_gradient(&model, &store, &scene, Objective::MixSecond { lambda }, &r).unwrap();
        let mut tg = Graph::new();
        let opts = RolloutOptions::new(Mode::Train, InputPolicy::Mix(lambda));
        let mixed = model.rollout(&mut tg, &store, &scene, &opts, &mut r.clone()).unwrap();
        let mut g = Graph::new();
        let mut targets = truth_frames(&mut g, &scene);
        for (s, t) in targets.iter_mut().enumerate().skip(5) {
            *t = g.constant(tg.value(mixed.output(s)).clone());
        }
        let opts = RolloutOptions::new(Mode::Train, InputPolicy::FreeRun);
        let free = model.rollout(&mut g, &store, &scene, &opts, &mut r.clone()).unwrap();
        let l = future_squared_error(&mut g, &free, &model.plan, &targets).unwrap();
        isolated &= g.backward(l).unwrap().params(&store) == got.grads;
    }

    // Probe parameter feeding only the mixed (detached) input path.
    let mut probe = ParamStore::new();
    probe.insert("p", DArray::new(vec![1, 2], vec![0.4, -0.9]).unwrap());
    probe.insert("w", DArray::new(vec![2, 2], vec![0.2, -0.3, 0.7, 0.5]).unwrap());
    let mut g = Graph::new();
    let p = g.param(&probe, "p").unwrap();
    let w = g.param(&probe, "w").unwrap();
    let pred = g.tanh(p);
    let frozen = g.detach(pred);
    let truth = g.constant(DArray::new(vec![1, 2], vec![0.1, 0.3]).unwrap());
    let a = g.scale(frozen, 0.6);
    let b = g.scale(truth, 0.4);
    let mixed = g.add(a, b).unwrap();
    let out = g.matmul(mixed, w).unwrap();
    let l = weighted_sum(&mut g, out, 7).unwrap();
    let grads = g.backward(l).unwrap().params(&probe);
    let stop_zero = grads["p"].values().iter().all(|v| *v == 0.0) && grads["w"].values().iter().any(|v| *v != 0.0);

    // 50 epochs of mixup on a small synthetic set; compare late-epoch averages of both objectives.
    let (train_s, val_s, _, normalizer) = tiny_dataset(40, 6);
    let model = model_with(16, 3);
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 8,
        strategy: Strategy::Mixup,
        val_samples: 1,
        seed: 6,
        ..Default::default()
    };
    let data = TrainData {
        train: &train_s,
        val: &val_s,
        normalizer,
    };
    let out = train(&model, &cfg, &data, None).map_err(|e| e.to_string())?;
    let tail = &out.log[45..];
    let l1 = tail.iter().map(|e| e.l1).sum::<f64>() / tail.len() as f64;
    let l2 = tail.iter().map(|e| e.l2.unwrap()).sum::<f64>() / tail.len() as f64;

    verdict(
        zero_ok && one_ok && second_ok && isolated && stop_zero && l2 < l1,
        format!(
            "lambda=0 {zero_ok}, lambda=1 {one_ok}, L2(lambda=1)=0 {second_ok}, target isolated {isolated}, \
             stop-gradient zero {stop_zero}; last-5-epoch L1 {l1:.5} vs L2 {l2:.5}"
        ),
    )
}

/// Shortened-run settings for the synthetic comparison.
const E2E_SEEDS: u64 = 5;
const E2E_HIDDEN: usize = 32;
const E2E_EPOCHS: usize = 20;
const E2E_BATCH: usize = 16;
const E2E_ALPHA_INTERVAL: usize = 10;
const E2E_SAMPLES: usize = 20;

struct RunStats {
    ade: f64,
    entropy: f64,
    gap: f64,
}

fn run_strategy(seed: u64, strategy: Strategy) -> RunStats {
    let ds = generate_synthetic(&SyntheticConfig {
        seed,
        ..Default::default()
    })
    .unwrap();
    let s = split_scenes(ds.scenes, DEFAULT_SPLIT).unwrap();
    let model = model_with(E2E_HIDDEN, 3);
    let cfg = TrainConfig {
        epochs: E2E_EPOCHS,
        batch_size: E2E_BATCH,
        strategy,
        alpha_decay_interval: E2E_ALPHA_INTERVAL,
        seed,
        ..Default::default()
    };
    let data = TrainData {
        train: &s.train,
        val: &s.val,
        normalizer: ds.normalizer,
    };
    let out: TrainOutcome = train(&model, &cfg, &data, None).unwrap();
    let (m, _) = evaluate_dataset(&model, &out.best_params, &ds.normalizer, &s.test, E2E_SAMPLES, seed).unwrap();
    let last = out.log.last().unwrap();
    RunStats {
        ade: m.overall.mean_ade,
        entropy: m.avg_entropy,
        gap: last.val_loss - last.train_loss,
    }
}

fn synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let strategies = [Strategy::Plain, Strategy::TeacherForcing, Strategy::Mixup, Strategy::GeMixup];
    let mut stats: Vec<Vec<RunStats>> = (0..strategies.len()).map(|_| Vec::new()).collect();
    for seed in 0..E2E_SEEDS {
        for (k, &st) in strategies.iter().enumerate() {
            stats[k].push(run_strategy(seed, st));
        }
    }
    let med = |k: usize, f: fn(&RunStats) -> f64| median(stats[k].iter().map(f).collect());
    let (plain, tf, mixup, ge) = (0, 1, 2, 3);
    let improvement = 1.0 - med(ge, |r| r.ade) / med(plain, |r| r.ade);
    let a = improvement >= 0.05;
    let b = med(ge, |r| r.entropy) < med(mixup, |r| r.entropy);
    let c = med(tf, |r| r.gap) > med(mixup, |r| r.gap);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    verdict(
        a && b && c && minutes < 30.0,
        format!(
            "(a) median ADE GE_mixup {:.4} vs plain {:.4}, improvement {:.1}% [{}]; \
             (b) entropy GE_mixup {:.3} vs mixup {:.3} [{}]; (c) gap TF {:.5} vs mixup {:.5} [{}]; \
             TF ADE {:.4}, mixup ADE {:.4}; {minutes:.1} min",
            med(ge, |r| r.ade),
            med(plain, |r| r.ade),
            100.0 * improvement,
            if a { "ok" } else { "FAIL" },
            med(ge, |r| r.entropy),
            med(mixup, |r| r.entropy),
            if b { "ok" } else { "FAIL" },
            med(tf, |r| r.gap),
            med(mixup, |r| r.gap),
            if c { "ok" } else { "FAIL" },
            med(tf, |r| r.ade),
            med(mixup, |r| r.ade),
        ),
    )
}

fn permutation_equivariance() -> Outcome {
    let cfg = ModelConfig {
        hidden: 16,
        edge_dim: 16,
        ..ModelConfig::default()
    }
    .deterministic();
    let model = Model::new(cfg, 5, 10).unwrap();
    let store = model.init_params(8);
    let mut rng = RngStream::new(8, 0);
    let future = |scene: &Scene| {
        let mut g = Graph::new();
        let opts = RolloutOptions::new(Mode::Eval, InputPolicy::FreeRun);
        let r = model.rollout(&mut g, &store, scene, &opts, &mut RngStream::new(0, 0)).unwrap();
        r.future_positions(&g, &model.plan)
    };
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = 2 + rng.index(7);
        let scene = random_scene(n, 3, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let base = future(&scene);
        let moved = future(&scene.permuted(&perm));
        for (k, &old) in perm.iter().enumerate() {
            for (a, b) in moved[k].iter().zip(&base[old]) {
                worst = worst.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            }
        }
    }
    verdict(worst < 1e-9, format!("50 cases, max abs deviation {worst:.2e}"))
}

fn metrics_oracle() -> Outcome {
    let mut rng = RngStream::new(9, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, t) = (1 + rng.index(8), 1 + rng.index(20));
        let truth: Vec<Vec<[f64; 2]>> = (0..n).map(|_| (0..t).map(|_| [rng.normal(), rng.normal()]).collect()).collect();
        let pred: Vec<Vec<[f64; 2]>> = (0..n).map(|_| (0..t).map(|_| [rng.normal(), rng.normal()]).collect()).collect();
        let mut sq = 0.0;
        for i in 0..n {
            let (mut sum, mut last) = (0.0, 0.0);
            for k in 0..t {
                let dx = truth[i][k][0] - pred[i][k][0];
                let dy = truth[i][k][1] - pred[i][k][1];
                sq += dx * dx + dy * dy;
                last = (dx * dx + dy * dy).sqrt();
                sum += last;
            }
            let (ade, fde) = ade_fde(&truth[i], &pred[i]).unwrap();
            worst = worst.max((ade - sum / t as f64).abs()).max((fde - last).abs());
        }
        let loss = reconstruction_loss(&truth, &pred).unwrap();
        worst = worst.max((loss - sq / (n * t) as f64).abs());
    }
    let model = model_with(8, 3);
    let store = model.init_params(9);
    let unit = Normalizer::new(-1.0, 1.0, -1.0, 1.0).unwrap();
    let mut ordered = true;
    for k in 0..10 {
        let scene = random_scene(3 + rng.index(4), 3, &mut rng);
        let m = sampled_metrics(&model, &store, &unit, &scene, k, 20, 9).unwrap();
        ordered &= m.overall.min_ade <= m.overall.mean_ade && m.overall.min_fde <= m.overall.mean_fde;
    }
    verdict(
        worst < 1e-12 && ordered,
        format!("max deviation from naive loops {worst:.1e}; min <= mean over K=20: {ordered}"),
    )
}

fn determinism() -> Outcome {
    let (train_s, val_s, test_s, normalizer) = tiny_dataset(20, 10);
    let model = model_with(8, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        val_samples: 2,
        seed: 10,
        ..Default::default()
    };
    let data = TrainData {
        train: &train_s,
        val: &val_s,
        normalizer,
    };
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut outcomes = Vec::new();
    for d in &dirs {
        let out = TrainOutput {
            dir: d.path().to_path_buf(),
            resume: false,
        };
        let o = train(&model, &cfg, &data, Some(&out)).map_err(|e| e.to_string())?;
        let (m, _) = evaluate_dataset(&model, &o.best_params, &normalizer, &test_s, 5, 10).unwrap();
        let label = RunLabel {
            dataset: "synthetic".into(),
            strategy: cfg.strategy.to_string(),
            gamma: cfg.gamma,
        };
        std::fs::write(d.path().join("metrics.csv"), metrics_csv(&label, &m)).unwrap();
        std::fs::write(d.path().join("metrics_by_category.csv"), category_csv(&label, &m)).unwrap();
        outcomes.push(o);
    }
    let files = ["best.ckpt", "last.ckpt", "train_log.csv", "metrics.csv", "metrics_by_category.csv"];
    let identical = files.iter().all(|f| {
        std::fs::read(dirs[0].path().join(f)).unwrap() == std::fs::read(dirs[1].path().join(f)).unwrap()
    });
    let loaded = ParamStore::load(dirs[0].path().join("best.ckpt")).map_err(|e| e.to_string())?;
    let round_trip = loaded == outcomes[0].best_params;
    let resaved = dirs[0].path().join("again.ckpt");
    loaded.save(&resaved).unwrap();
    let stable = std::fs::read(&resaved).unwrap() == std::fs::read(dirs[0].path().join("best.ckpt")).unwrap();
    verdict(
        identical && round_trip && stable,
        format!("identical {files:?}: {identical}; checkpoint round trip exact: {round_trip}; re-save stable: {stable}"),
    )
}

fn selection_heuristic() -> Outcome {
    let mut rng = RngStream::new(11, 0);
    let th = Thresholds { low: 0.2, high: 0.8 };
    let (mut matrices, mut violations, mut max_uncertain) = (0, 0, 0);
    while matrices < 100 {
        let n = 3 + rng.index(4);
        let probs: Vec<f64> = (0..n * n)
            .map(|k| if k % (n + 1) == 0 { 0.0 } else { rng.uniform(0.0, 1.0) })
            .collect();
        let uncertain = probs
            .iter()
            .enumerate()
            .filter(|(k, p)| k % (n + 1) != 0 && (th.low..=th.high).contains(*p))
            .count();
        if uncertain > EXHAUSTIVE_LIMIT {
            continue;
        }
        let sel = select_graph(&probs, n, None, th, Heuristic::Entropy).unwrap();
        assert!(sel.exhaustive);
        matrices += 1;
        max_uncertain = max_uncertain.max(sel.uncertain.len());
        let chosen = graph_entropy(&sel.z, n).unwrap();
        let base: Vec<f64> = (0..n * n)
            .map(|k| if k % (n + 1) != 0 && probs[k] > th.high { 1.0 } else { 0.0 })
            .collect();
        for mask in 0u32..(1 << sel.uncertain.len()) {
            let mut z = base.clone();
            for (b, &(i, j)) in sel.uncertain.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    z[i * n + j] = 1.0;
                }
            }
            if chosen > graph_entropy(&z, n).unwrap() + 1e-12 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{matrices} matrices (up to {max_uncertain} uncertain edges), {violations} better completions found"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("gradient suite", gradient_suite),
        ("minimum graph entropy", entropy_minimum),
        ("majorization", majorization),
        ("deviation bounds", deviation_bounds),
        ("entropy extremes", entropy_extremes),
        ("mixup mechanics", mixup_mechanics),
        ("synthetic end-to-end", synthetic_end_to_end),
        ("permutation equivariance", permutation_equivariance),
        ("metrics oracle", metrics_oracle),
        ("determinism and persistence", determinism),
        ("graph selection", selection_heuristic),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
