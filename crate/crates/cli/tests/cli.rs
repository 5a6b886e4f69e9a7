use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
[data]
n_scenes = 16
min_agents = 3
max_agents = 4
seed = 5

[model]
hidden = 8
edge_dim = 8

[train]
epochs = 2
batch_size = 4
learning_rate = 0.005
strategy = "GE_mixup"
gamma = 0.002
val_samples = 1

[eval]
samples = 3
gammas = [0.0, 0.001]
quality_scenes = 1
svg_scenes = 1
"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), SMALL).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let config = self.path("run.toml");
        Command::new(env!("CARGO_BIN_EXE_hetgraph"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg(&config)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn gen_data_writes_three_splits_and_sidecar() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "gen-data"]);
    for split in ["train", "val", "test"] {
        let rows = csv_rows(&ws.path(&format!("data/{split}.csv")));
        assert!(rows.len() > 1);
    }
    let sidecar = fs::read_to_string(ws.path("data/normalization.txt")).unwrap();
    assert!(sidecar.contains("min_x") && sidecar.contains("max_y"));
}

#[test]
fn gen_data_is_byte_identical_for_a_seed() {
    let ws = Workspace::new();
    ws.ok(&["--out", "a", "gen-data"]);
    ws.ok(&["--out", "b", "gen-data"]);
    for f in ["train.csv", "val.csv", "test.csv", "normalization.txt"] {
        assert_eq!(fs::read(ws.path("a").join(f)).unwrap(), fs::read(ws.path("b").join(f)).unwrap(), "{f}");
    }
    ws.ok(&["--out", "c", "--seed", "6", "gen-data"]);
    assert_ne!(fs::read(ws.path("a/train.csv")).unwrap(), fs::read(ws.path("c/train.csv")).unwrap());
}

#[test]
fn bad_split_fractions_exit_with_config_code() {
    let ws = Workspace::new();
    fs::write(ws.path("run.toml"), format!("{SMALL}\n").replace("seed = 5", "seed = 5\nsplit = [0.5, 0.2, 0.2]")).unwrap();
    let out = ws.run(&["--out", "data", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let ws = Workspace::new();
    fs::write(ws.path("run.toml"), format!("{SMALL}\n").replace("hidden = 8", "hiden = 8")).unwrap();
    assert_eq!(ws.run(&["gen-data"]).status.code(), Some(1));
}

#[test]
fn train_evaluate_analyze_pipeline() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "gen-data"]);
    ws.ok(&["--out", "run", "train", "--data", "data"]);
    for f in ["best.ckpt", "last.ckpt", "train_log.csv", "config.toml"] {
        assert!(ws.path("run").join(f).exists(), "{f}");
    }
    let log = csv_rows(&ws.path("run/train_log.csv"));
    assert_eq!(log[0], "epoch,strategy,train_loss,val_loss,L1,L2,entropy,density,alpha,gamma");
    assert_eq!(log.len(), 3);
    assert!(log[1].starts_with("0,GE_mixup,"));
    assert!(log[1].ends_with(",0.002"));

    ws.ok(&["--out", "eval", "evaluate", "--checkpoint", "run/best.ckpt", "--data", "data"]);
    let metrics = csv_rows(&ws.path("eval/metrics.csv"));
    assert_eq!(metrics.len(), 2);
    let preds = csv_rows(&ws.path("eval/predictions.csv"));
    assert_eq!(preds[0], "scene_id,sample_id,agent_id,t,x,y");
    assert!(ws.path("eval/metrics_by_category.csv").exists());

    ws.ok(&["--out", "graphs", "analyze-graphs", "--checkpoint", "run/best.ckpt", "--data", "data"]);
    let stats = csv_rows(&ws.path("graphs/graph_stats.csv"));
    assert!(stats[0].starts_with("scene_id,window,num_agents,edges,entropy,density"));
    let svgs: Vec<_> = fs::read_dir(ws.path("graphs"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "svg"))
        .collect();
    assert!(!svgs.is_empty());
    let svg = fs::read_to_string(svgs[0].path()).unwrap();
    assert!(svg.contains("<svg") && svg.trim_end().ends_with("</svg>") && svg.contains("stroke-dasharray"));
    assert!(ws.path("graphs/graph_quality.csv").exists());
}

#[test]
fn evaluation_is_reproducible() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "gen-data"]);
    ws.ok(&["--out", "run", "train", "--data", "data"]);
    ws.ok(&["--out", "e1", "evaluate", "--checkpoint", "run/best.ckpt", "--data", "data"]);
    ws.ok(&["--out", "e2", "evaluate", "--checkpoint", "run/best.ckpt", "--data", "data"]);
    for f in ["metrics.csv", "metrics_by_category.csv", "predictions.csv"] {
        assert_eq!(fs::read(ws.path("e1").join(f)).unwrap(), fs::read(ws.path("e2").join(f)).unwrap());
    }
}

#[test]
fn resume_continues_epoch_numbering() {
    let ws = Workspace::new();
    ws.ok(&["--out", "run", "train"]);
    fs::write(ws.path("run.toml"), SMALL.replace("epochs = 2", "epochs = 3")).unwrap();
    ws.ok(&["--out", "run", "train", "--resume"]);
    let log = csv_rows(&ws.path("run/train_log.csv"));
    let epochs: Vec<&str> = log[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["0", "1", "2"]);
}

#[test]
fn strategy_flag_overrides_config() {
    let ws = Workspace::new();
    ws.ok(&["--out", "run", "--strategy", "TF", "--gamma", "0", "train"]);
    let log = csv_rows(&ws.path("run/train_log.csv"));
    assert!(log[1].starts_with("0,TF,"));
    assert_eq!(ws.run(&["--strategy", "bogus", "train"]).status.code(), Some(1));
}

#[test]
fn verify_theory_passes() {
    let ws = Workspace::new();
    let out = ws.ok(&["verify-theory", "--trials", "200"]);
    assert!(!out.is_empty());
    ws.ok(&["verify-theory", "--check", "entropy", "--max-n", "4"]);
    assert_eq!(ws.run(&["verify-theory", "--check", "nope"]).status.code(), Some(1));
}

#[test]
fn missing_data_file_is_data_error() {
    let ws = Workspace::new();
    let out = ws.run(&["evaluate", "--checkpoint", "nope.ckpt", "--data", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_gamma() {
    let ws = Workspace::new();
    ws.ok(&["--out", "sweep", "--strategy", "GE", "sweep-gamma"]);
    let rows = csv_rows(&ws.path("sweep/sweep.csv"));
    assert_eq!(rows.len(), 3);
    let dirs = fs::read_dir(ws.path("sweep")).unwrap().filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).count();
    assert_eq!(dirs, 2);
}

#[test]
fn help_exits_zero_and_bad_flag_exits_one() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["--help"]).status.code(), Some(0));
    assert_eq!(ws.run(&["--no-such-flag", "gen-data"]).status.code(), Some(1));
}
