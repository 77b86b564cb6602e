use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

fn hsched(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsched"))
        .args(args)
        .current_dir(dir)
        .env_remove("HSCHED_OUT_DIR")
        .env_remove("HSCHED_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hsched(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sha(path: &Path) -> String {
    hsched::manifest::sha256_file(path).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

/// A tiny trained pipeline shared by the tests: corpus, internal and outer
/// checkpoints.
struct Pipeline {
    dir: TempDir,
}

impl Pipeline {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        ok(d, &["gen-corpus", "--items", "300", "--detectors", "3", "--seed", "1", "--out", "corpus.json"]);
        ok(
            d,
            &[
                "train-internal", "--corpus", "corpus.json", "--reward", "exp3", "--episodes", "2700",
                "--restarts", "2", "--seed", "1", "--out", "int.json",
            ],
        );
        ok(
            d,
            &[
                "train-outer", "--corpus", "corpus.json", "--internal", "int.json", "--n", "5", "--epochs", "2",
                "--eval-queues", "4", "--seed", "1", "--out", "outer.json",
            ],
        );
        Pipeline { dir }
    })
}

#[test]
fn gen_corpus_writes_file_and_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-corpus", "--items", "50", "--detectors", "4", "--seed", "7", "--out", "a.json"]);
    ok(d, &["gen-corpus", "--items", "50", "--detectors", "4", "--seed", "7", "--out", "b.json"]);
    assert_eq!(sha(&d.join("a.json")), sha(&d.join("b.json")));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("a.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "gen-corpus");
    assert_eq!(manifest["seeds"]["seed"], 7);
    assert_eq!(manifest["config"]["items"], 50);
    assert_eq!(manifest["outputs"][0]["sha256"], sha(&d.join("a.json")));
    let corpus = hsched_core::corpus::load_corpus(d.join("a.json")).unwrap();
    assert_eq!((corpus.len(), corpus.n_detectors()), (50, 4));
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hsched(dir.path(), &["gen-corpus", "--items", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--out"));
}

#[test]
fn malformed_flags_exit_2_and_bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(hsched(d, &["gen-corpus", "--items", "many", "--out", "x"]).status.code(), Some(2));
    assert_eq!(hsched(d, &["no-such-command"]).status.code(), Some(2));
    let zero = hsched(d, &["gen-corpus", "--items", "0", "--out", "x.json"]);
    assert_eq!(zero.status.code(), Some(1));
    assert!(!stderr_of(&zero).is_empty());
    assert!(hsched(d, &["--help"]).status.success());
}

#[test]
fn unknown_reward_preset_is_rejected() {
    let p = pipeline();
    let out = hsched(p.dir.path(), &["train-internal", "--corpus", "corpus.json", "--reward", "exp9", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("exp9") && err.contains("exp1"), "{err}");
    assert!(!p.path("x.json").exists());
}

#[test]
fn internal_metrics_have_one_row_per_epoch() {
    let p = pipeline();
    // 2700 episodes over a 270-item training split is 10 epochs per restart.
    let rows = csv_rows(&p.path("int.metrics.csv"));
    assert_eq!(rows[0][..3], ["restart_seed", "epoch", "episodes"]);
    assert_eq!(rows.len(), 1 + 2 * 10);
    for (i, seed) in [(0, "1"), (1, "2")] {
        let epochs: Vec<String> = rows[1 + 10 * i..11 + 10 * i].iter().map(|r| r[1].clone()).collect();
        assert_eq!(epochs, (1..=10).map(|e| e.to_string()).collect::<Vec<_>>());
        assert!(rows[1 + 10 * i..11 + 10 * i].iter().all(|r| r[0] == seed));
    }
    let restarts = csv_rows(&p.path("int.restarts.csv"));
    assert_eq!(restarts.len(), 3);
    assert_eq!(restarts[1..].iter().filter(|r| r[4] == "true").count(), 1);

    let ckpt = hsched_core::rl::Checkpoint::load(p.path("int.json")).unwrap();
    assert_eq!(ckpt.role, "internal");
    assert_eq!(ckpt.extra["corpus_sha256"], sha(&p.path("corpus.json")));
    assert_eq!(ckpt.extra["manifest"], "int.json.manifest.json");
    assert_eq!(ckpt.extra["split_seed"], 0);
}

#[test]
fn epoch_checkpoints_are_written_on_request() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let corpus = p.path("corpus.json");
    ok(
        dir.path(),
        &[
            "train-internal", "--corpus", corpus.to_str().unwrap(), "--episodes", "540", "--restarts", "1",
            "--out", "i.json", "--epoch-checkpoints", "epochs",
        ],
    );
    let mut names: Vec<String> = fs::read_dir(dir.path().join("epochs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["internal-seed0-epoch0001.json", "internal-seed0-epoch0002.json"]);
}

#[test]
fn outer_training_leaves_the_internal_checkpoint_alone() {
    let p = pipeline();
    let before = sha(&p.path("int.json"));
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = p.path("corpus.json");
    let internal = p.path("int.json");
    ok(
        d,
        &[
            "train-outer", "--corpus", corpus.to_str().unwrap(), "--internal", internal.to_str().unwrap(), "--n",
            "3", "--episodes", "300", "--out", "o.json",
        ],
    );
    assert_eq!(sha(&internal), before);
    let ckpt = hsched_core::rl::Checkpoint::load(d.join("o.json")).unwrap();
    assert_eq!((ckpt.net.input_dim(), ckpt.net.action_dim()), (3 * 4, 3));
    assert_eq!(ckpt.extra["internal_sha256"], before);
    assert!(ckpt.extra.contains_key("aux"));
    let manifest: Value = serde_json::from_str(&fs::read_to_string(d.join("o.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["checkpoint_sha256"]["internal"], before);
}

#[test]
fn outer_training_usage_and_missing_inputs() {
    let p = pipeline();
    let d = p.dir.path();
    let zero = hsched(d, &["train-outer", "--corpus", "corpus.json", "--internal", "int.json", "--n", "0", "--out", "z.json"]);
    assert_eq!(zero.status.code(), Some(2));
    let missing = hsched(d, &["train-outer", "--corpus", "corpus.json", "--internal", "nope.json", "--out", "z.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr_of(&missing).contains("nope.json"));
    let swapped = hsched(d, &["train-outer", "--corpus", "corpus.json", "--internal", "outer.json", "--out", "z.json"]);
    assert_eq!(swapped.status.code(), Some(1));
}

#[test]
fn static_eval_table_has_a_row_per_size_and_a_column_per_scheduler() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev");
    ok(
        p.dir.path(),
        &[
            "eval", "--mode", "static", "--corpus", "corpus.json", "--internal", "int.json", "--outer", "outer.json",
            "--sizes", "5,10,...,25", "--schedulers", "all", "--reps", "3", "--out", out.to_str().unwrap(),
        ],
    );
    let summary = csv_rows(&out.join("static_summary.csv"));
    assert_eq!(summary.len(), 1 + 5);
    assert_eq!(summary[0].len(), 2 + 9);
    assert_eq!(summary[0][2..], ["FCFS", "SFF", "LFF", "MLFQ", "SEPT", "CBPT", "SPT", "LPT", "MERLIN"]);
    let sizes: Vec<&str> = summary[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(sizes, ["5", "10", "15", "20", "25"]);
    let runs = csv_rows(&out.join("static_runs.csv"));
    assert_eq!(runs.len(), 1 + 5 * 3 * 9);

    // Summary means are the means of the per-replication rows.
    let json: hsched::commands::StaticSummary =
        serde_json::from_str(&fs::read_to_string(out.join("static_summary.json")).unwrap()).unwrap();
    for sz in &json.sizes {
        for agg in &sz.aggregates {
            let vals: Vec<f64> = runs[1..]
                .iter()
                .filter(|r| r[0] == sz.queue_size.to_string() && r[2] == agg.scheduler.name())
                .map(|r| r[3].parse().unwrap())
                .collect();
            assert_eq!(vals.len(), 3);
            let mean = vals.iter().sum::<f64>() / 3.0;
            assert!((mean - agg.mean).abs() < 1e-9);
        }
    }
}

#[test]
fn default_reps_depend_on_queue_size() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev");
    ok(
        p.dir.path(),
        &[
            "eval", "--corpus", "corpus.json", "--internal", "int.json", "--sizes", "10,11", "--schedulers", "FCFS",
            "--out", out.to_str().unwrap(),
        ],
    );
    let summary = csv_rows(&out.join("static_summary.csv"));
    assert_eq!(summary[1][..2], ["10", "500"]);
    assert_eq!(summary[2][..2], ["11", "100"]);
}

#[test]
fn eval_rejects_bad_scheduler_lists() {
    let p = pipeline();
    let d = p.dir.path();
    let base = ["eval", "--corpus", "corpus.json", "--internal", "int.json", "--out", "bad"];
    let unknown = hsched(d, &[&base[..], &["--schedulers", "FCFS,EDF"]].concat());
    assert_eq!(unknown.status.code(), Some(2));
    let err = stderr_of(&unknown);
    assert!(err.contains("EDF") && err.contains("MLFQ") && err.contains("MERLIN"), "{err}");
    let no_outer = hsched(d, &[&base[..], &["--schedulers", "all"]].concat());
    assert_eq!(no_outer.status.code(), Some(2));
    assert!(stderr_of(&no_outer).contains("--outer"));
    let bad_mode = hsched(d, &[&base[..], &["--schedulers", "FCFS", "--mode", "live"]].concat());
    assert_eq!(bad_mode.status.code(), Some(2));
    let bad_sizes = hsched(d, &[&base[..], &["--schedulers", "FCFS", "--sizes", "10,...,20"]].concat());
    assert_eq!(bad_sizes.status.code(), Some(2));
}

#[test]
fn dynamic_eval_writes_backlog_traces() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dyn");
    ok(
        p.dir.path(),
        &[
            "eval", "--mode", "dynamic", "--regime", "overload", "--corpus", "corpus.json", "--internal", "int.json",
            "--outer", "outer.json", "--stream-items", "60", "--out", out.to_str().unwrap(),
        ],
    );
    let backlog = csv_rows(&out.join("backlog.csv"));
    assert_eq!(backlog[0], ["regime", "scheduler", "clock_s", "backlog"]);
    assert!(backlog[1..].iter().all(|r| r[0] == "overload"));
    for kind in ["FCFS", "MERLIN"] {
        let points: Vec<(f64, usize)> = backlog[1..]
            .iter()
            .filter(|r| r[1] == kind)
            .map(|r| (r[2].parse().unwrap(), r[3].parse().unwrap()))
            .collect();
        assert!(!points.is_empty());
        assert!(points.windows(2).all(|w| w[0].0 <= w[1].0));
        assert_eq!(points.last().unwrap().1, 0);
    }
    let summary = csv_rows(&out.join("dynamic_summary.csv"));
    assert_eq!(summary.len(), 1 + 9);
    assert!(summary[1..].iter().all(|r| r[2] == "60"));
}

#[test]
fn flags_override_the_config_file_and_env_sets_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"seed": 3, "gen-corpus": {"items": 40, "detectors": 2, "out": "from-file.json"}}"#,
    )
    .unwrap();
    ok(d, &["--config", "cfg.json", "gen-corpus", "--items", "20"]);
    let corpus = hsched_core::corpus::load_corpus(d.join("from-file.json")).unwrap();
    assert_eq!((corpus.len(), corpus.n_detectors(), corpus.seed()), (20, 2, 3));

    let status = Command::new(env!("CARGO_BIN_EXE_hsched"))
        .args(["gen-corpus", "--items", "10", "--out", "c.json"])
        .current_dir(d)
        .env("HSCHED_OUT_DIR", "results")
        .env_remove("HSCHED_WORKERS")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(d.join("results/c.json").is_file());
    assert!(d.join("results/c.json.manifest.json").is_file());
}

#[test]
fn manifest_replay_gives_identical_csvs() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(
        p.dir.path(),
        &[
            "eval", "--corpus", "corpus.json", "--internal", "int.json", "--outer", "outer.json", "--sizes", "5,8",
            "--reps", "4", "--workers", "1", "--out", first.to_str().unwrap(),
        ],
    );
    let manifest = first.join("manifest.json");
    let second = dir.path().join("second");
    ok(
        p.dir.path(),
        &["--config", manifest.to_str().unwrap(), "--workers", "3", "eval", "--out", second.to_str().unwrap()],
    );
    for name in ["static_runs.csv", "static_summary.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
    let wrong = hsched(p.dir.path(), &["--config", manifest.to_str().unwrap(), "report"]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn report_renders_the_summaries() {
    let p = pipeline();
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("ev");
    ok(
        p.dir.path(),
        &[
            "eval", "--corpus", "corpus.json", "--internal", "int.json", "--schedulers", "FCFS,SPT", "--sizes", "6",
            "--reps", "5", "--out", ev.to_str().unwrap(),
        ],
    );
    ok(dir.path(), &["report", "--input", "ev"]);
    let md = fs::read_to_string(ev.join("report.md")).unwrap();
    assert!(md.contains("| size | reps | FCFS | SPT |"));
    assert!(md.contains("Change against FCFS"));
    assert!(md.contains("| 6 | 5 |"));
    assert!(ev.join("report.md.manifest.json").is_file());
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(hsched(empty.path(), &["report", "--input", "."]).status.code(), Some(1));
}
