use std::fs;
use std::path::{Path, PathBuf};

use hetgraph::config::RunConfig;
use hetgraph::data::{generate_synthetic, load_csv, save_csv, split_scenes, Normalizer, Scene};
use hetgraph::eval::metrics::{evaluate_sample, EvalRequest};
use hetgraph::eval::report::{
    category_csv, metrics_csv, prediction_rows, trajectory_svg, RunLabel, GRAPH_STATS_HEADER, METRICS_HEADER,
    PREDICTION_HEADER,
};
use hetgraph::eval::{
    entropy_table, evaluate_dataset, format_entropy_table, graph_quality, majorization_check, select_graph,
    verify_deviation_bounds, BoundCheckConfig, MetricsRecord, QualityConfig,
};
use hetgraph::graph::{graph_entropy, r_density};
use hetgraph::model::{InputPolicy, Mode, Model, RolloutOptions};
use hetgraph::numerics::{Graph, ParamStore, RngStream};
use hetgraph::train::{train, TrainData, TrainOutput};
use hetgraph::{Error, Result};

use crate::{Cli, Command, Common};

const SIDECAR: &str = "normalization.txt";
const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    if let Some(t) = cli.common.threads {
        hetgraph::parallel::set_threads(t)?;
    }
    let out = &cli.common.out;
    match &cli.command {
        Command::GenData => gen_data(&cfg, out),
        Command::Train { data, resume } => cmd_train(&cfg, data.as_deref(), out, *resume),
        Command::Evaluate { checkpoint, data, split } => evaluate(&cfg, checkpoint, data, split, out),
        Command::VerifyTheory { check, max_n, trials } => verify_theory(&cfg, check, *max_n, *trials),
        Command::AnalyzeGraphs { checkpoint, data, split } => analyze_graphs(&cfg, checkpoint, data, split, out),
        Command::SweepGamma { data } => sweep_gamma(&cfg, data.as_deref(), out),
    }
}

/// Config file (or defaults) with flag overrides applied.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.data.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(s) = &common.strategy {
        cfg.train.strategy = s.parse()?;
    }
    if let Some(g) = common.gamma {
        cfg.train.gamma = g;
    }
    if let Some(k) = common.samples {
        cfg.eval.samples = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = generate_synthetic(&cfg.data)?;
    let raw: Vec<Scene> = ds.scenes.iter().map(|s| ds.normalizer.denormalize(s)).collect();
    let splits = split_scenes(raw, cfg.data.split)?;
    create_dir(out)?;
    for (name, scenes) in SPLITS.iter().zip([&splits.train, &splits.val, &splits.test]) {
        save_csv(scenes, out.join(format!("{name}.csv")))?;
    }
    ds.normalizer.save(out.join(SIDECAR))?;
    println!(
        "wrote {} train, {} val, {} test scenes to {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        out.display()
    );
    Ok(())
}

/// Normalized scenes of one split plus the sidecar bounds.
fn load_split(cfg: &RunConfig, dir: &Path, split: &str) -> Result<(Vec<Scene>, Normalizer)> {
    if !SPLITS.contains(&split) {
        return Err(Error::Config(format!("unknown split `{split}` (train|val|test)")));
    }
    let normalizer = Normalizer::load(dir.join(SIDECAR))?;
    let raw = load_csv(dir.join(format!("{split}.csv")), cfg.data.num_categories)?;
    let scenes = raw.iter().map(|s| normalizer.normalize(s)).collect::<Result<Vec<_>>>()?;
    Ok((scenes, normalizer))
}

struct Dataset {
    train: Vec<Scene>,
    val: Vec<Scene>,
    test: Vec<Scene>,
    normalizer: Normalizer,
}

fn dataset(cfg: &RunConfig, dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        Some(d) => {
            let (train, normalizer) = load_split(cfg, d, "train")?;
            let (val, _) = load_split(cfg, d, "val")?;
            let (test, _) = load_split(cfg, d, "test")?;
            Ok(Dataset {
                train,
                val,
                test,
                normalizer,
            })
        }
        None => {
            let ds = generate_synthetic(&cfg.data)?;
            let s = split_scenes(ds.scenes, cfg.data.split)?;
            Ok(Dataset {
                train: s.train,
                val: s.val,
                test: s.test,
                normalizer: ds.normalizer,
            })
        }
    }
}

fn model(cfg: &RunConfig) -> Result<Model> {
    Model::new(cfg.model.clone(), cfg.data.history, cfg.data.future)
}

fn cmd_train(cfg: &RunConfig, data: Option<&Path>, out: &Path, resume: bool) -> Result<()> {
    let ds = dataset(cfg, data)?;
    let model = model(cfg)?;
    create_dir(out)?;
    write(out.join("config.toml"), &cfg.to_toml())?;
    let target = TrainOutput {
        dir: out.to_path_buf(),
        resume,
    };
    let outcome = train(
        &model,
        &cfg.train,
        &TrainData {
            train: &ds.train,
            val: &ds.val,
            normalizer: ds.normalizer,
        },
        Some(&target),
    )?;
    println!(
        "best epoch {} with validation mean ADE {:.4}; checkpoints in {}",
        outcome.best_epoch,
        outcome.best_val_ade,
        out.display()
    );
    Ok(())
}

fn label(cfg: &RunConfig, dataset: &str) -> RunLabel {
    RunLabel {
        dataset: dataset.to_string(),
        strategy: cfg.train.strategy.to_string(),
        gamma: cfg.train.effective_gamma(),
    }
}

fn write_metrics(out: &Path, label: &RunLabel, m: &MetricsRecord) -> Result<()> {
    write(out.join("metrics.csv"), &metrics_csv(label, m))?;
    write(out.join("metrics_by_category.csv"), &category_csv(label, m))
}

fn evaluate(cfg: &RunConfig, checkpoint: &Path, data: &Path, split: &str, out: &Path) -> Result<()> {
    let (scenes, normalizer) = load_split(cfg, data, split)?;
    let model = model(cfg)?;
    let store = ParamStore::load(checkpoint)?;
    let (m, _) = evaluate_dataset(&model, &store, &normalizer, &scenes, cfg.eval.samples, cfg.train.seed)?;
    create_dir(out)?;
    write_metrics(out, &label(cfg, split), &m)?;
    let mut preds = format!("{PREDICTION_HEADER}\n");
    for (s, scene) in scenes.iter().enumerate() {
        for k in 0..cfg.eval.samples {
            let req = EvalRequest {
                scene,
                scene_index: s,
                sample: k,
                seed: cfg.train.seed,
                relation_override: None,
            };
            let o = evaluate_sample(&model, &store, &normalizer, &req)?;
            prediction_rows(&mut preds, scene, k, cfg.data.history, &o.predicted);
        }
    }
    write(out.join("predictions.csv"), &preds)?;
    let o = &m.overall;
    println!(
        "{split}: minADE {:.4} minFDE {:.4} meanADE {:.4} meanFDE {:.4} entropy {:.4} density {:.4}",
        o.min_ade, o.min_fde, o.mean_ade, o.mean_fde, m.avg_entropy, m.avg_density
    );
    Ok(())
}

fn verify_theory(cfg: &RunConfig, check: &str, max_n: usize, trials: usize) -> Result<()> {
    let all = check == "all";
    if !all && !["entropy", "bounds", "majorization"].contains(&check) {
        return Err(Error::Config(format!("unknown check `{check}` (entropy|bounds|majorization|all)")));
    }
    let mut failures = Vec::new();
    if all || check == "entropy" {
        let rows = entropy_table(max_n)?;
        print!("{}", format_entropy_table(&rows));
        let bad = rows.iter().filter(|r| !(r.matches && r.monotone)).count();
        println!("entropy minimum: {} rows, {bad} mismatches", rows.len());
        if bad > 0 {
            failures.push("entropy");
        }
    }
    if all || check == "bounds" {
        let mut rng = RngStream::keyed(cfg.train.seed, &[0xB0_D5]);
        let r = verify_deviation_bounds(
            &mut rng,
            &BoundCheckConfig {
                trials,
                ..BoundCheckConfig::default()
            },
        )?;
        println!("check                 trials  violations");
        println!("pathwise              {:>6}  {:>10}", r.trials, r.pathwise_violations);
        println!("mixed-input mean      {:>6}  {:>10}", r.trials, r.mixed_violations);
        println!("imitation mean        {:>6}  {:>10}", r.trials, r.imitation_violations);
        println!("bound ordering        {:>6}  {:>10}", r.trials, r.ordering_violations);
        if !r.passed() {
            failures.push("bounds");
        }
    }
    if all || check == "majorization" {
        let mut rng = RngStream::keyed(cfg.train.seed, &[0x3A_70]);
        let r = majorization_check(trials, &mut rng)?;
        println!("majorization: {} pairs, {} violations", r.pairs, r.violations);
        if r.violations > 0 {
            failures.push("majorization");
        }
    }
    if failures.is_empty() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(Error::TheoryViolation(format!("failed: {}", failures.join(", "))))
    }
}

fn analyze_graphs(cfg: &RunConfig, checkpoint: &Path, data: &Path, split: &str, out: &Path) -> Result<()> {
    let (scenes, normalizer) = load_split(cfg, data, split)?;
    let model = model(cfg)?;
    let store = ParamStore::load(checkpoint)?;
    create_dir(out)?;

    let mut stats = format!("{GRAPH_STATS_HEADER},selected_edges,selected_entropy\n");
    let mut previous: Option<Vec<f64>> = None;
    for (s, scene) in scenes.iter().enumerate() {
        let n = scene.num_agents();
        let mut g = Graph::new();
        let mut rng = RngStream::keyed(cfg.train.seed, &[hetgraph::eval::metrics::EVAL_STREAM, s as u64, 0]);
        let r = model.rollout(
            &mut g,
            &store,
            scene,
            &RolloutOptions::new(Mode::Eval, InputPolicy::FreeRun),
            &mut rng,
        )?;
        for (w, inferred) in r.graphs.iter().enumerate() {
            let Some(inferred) = inferred else { continue };
            let dense = r.edges.to_dense(g.value(inferred.z).values());
            let probs = r.edges.to_dense(&inferred.probs);
            let prev = previous.as_ref().filter(|p| p.len() == n * n).map(Vec::as_slice);
            let heuristic = match (cfg.eval.heuristic, prev) {
                (hetgraph::eval::Heuristic::Similarity, None) => hetgraph::eval::Heuristic::Entropy,
                (h, _) => h,
            };
            let sel = select_graph(&probs, n, prev, cfg.eval.thresholds(), heuristic)?;
            stats.push_str(&format!(
                "{},{w},{n},{},{:.10},{:.10},{},{:.10}\n",
                scene.scene_id,
                dense.iter().filter(|v| **v > 0.5).count(),
                graph_entropy(&dense, n)?,
                r_density(&dense, n),
                sel.z.iter().filter(|v| **v > 0.5).count(),
                graph_entropy(&sel.z, n)?
            ));
            previous = Some(sel.z);
        }
        if s < cfg.eval.svg_scenes {
            let predicted = r.future_positions(&g, &model.plan);
            let raw = normalizer.denormalize(scene);
            let pred_raw: Vec<Vec<[f64; 2]>> = predicted
                .iter()
                .map(|row| row.iter().map(|p| normalizer.denormalize_point(*p)).collect())
                .collect();
            write(
                out.join(format!("trajectories_{}.svg", scene.scene_id)),
                &trajectory_svg(&raw, cfg.data.history, &pred_raw),
            )?;
        }
    }
    write(out.join("graph_stats.csv"), &stats)?;

    let audited = &scenes[..cfg.eval.quality_scenes.min(scenes.len())];
    let q = graph_quality(
        &model,
        &store,
        &normalizer,
        audited,
        &QualityConfig {
            significance: cfg.eval.significance,
            samples: cfg.eval.samples,
            seed: cfg.train.seed,
        },
    )?;
    write(
        out.join("graph_quality.csv"),
        &format!(
            "scenes_audited,scenes_skipped,inferred_edges,redundant,missing,redundant_rate,missing_rate\n{},{},{},{},{},{:.10},{:.10}\n",
            q.scenes_audited,
            q.scenes_skipped,
            q.inferred,
            q.redundant,
            q.missing,
            q.redundant_rate(),
            q.missing_rate()
        ),
    )?;
    println!(
        "{} scenes audited ({} skipped): redundant rate {:.4}, missing rate {:.4}",
        q.scenes_audited,
        q.scenes_skipped,
        q.redundant_rate(),
        q.missing_rate()
    );
    Ok(())
}

fn sweep_gamma(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    let ds = dataset(cfg, data)?;
    let model = model(cfg)?;
    create_dir(out)?;
    let mut table = format!("{METRICS_HEADER}\n");
    for &gamma in &cfg.eval.gammas {
        let mut run = cfg.clone();
        run.train.gamma = gamma;
        let dir = out.join(format!("gamma_{gamma}"));
        let outcome = train(
            &model,
            &run.train,
            &TrainData {
                train: &ds.train,
                val: &ds.val,
                normalizer: ds.normalizer,
            },
            Some(&TrainOutput {
                dir: dir.clone(),
                resume: false,
            }),
        )?;
        let (m, _) = evaluate_dataset(&model, &outcome.best_params, &ds.normalizer, &ds.test, run.eval.samples, run.train.seed)?;
        write_metrics(&dir, &label(&run, "test"), &m)?;
        let row = metrics_csv(&label(&run, "test"), &m);
        table.push_str(row.lines().nth(1).expect("data row"));
        table.push('\n');
        println!(
            "gamma {gamma}: meanADE {:.4} entropy {:.4} density {:.4}",
            m.overall.mean_ade, m.avg_entropy, m.avg_density
        );
    }
    write(out.join("sweep.csv"), &table)
}
