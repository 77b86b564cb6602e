//! The five subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use hsched_core::baselines::{parse_scheduler_list, AuxModels, SchedulerContext, SchedulerKind};
use hsched_core::corpus::{generate_corpus, load_corpus, save_corpus, split_train_test, Corpus, CorpusConfig};
use hsched_core::internal::{CostFunction, RewardSetup};
use hsched_core::rl::{Checkpoint, TrainConfig, Trainer};
use hsched_core::simulator::{
    average_completion_time, run_dynamic, run_replicated, run_static, sample_queue, Aggregate, ArrivalConfig,
    ArrivalMode, Regime,
};
use hsched_core::training::{evaluate_internal, train_internal_restarts_with, train_outer_with, EpochReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{output_path, parse_sizes, Settings};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, sha256_file, write_file, RunManifest};
use crate::table::{num, write_csv};
use crate::{defaults, Cli, Command};

pub const STATIC_SUMMARY_JSON: &str = "static_summary.json";
pub const DYNAMIC_SUMMARY_JSON: &str = "dynamic_summary.json";
pub const EVAL_MANIFEST: &str = "manifest.json";

/// Shared state of one command invocation.
struct Run {
    settings: Settings,
    out_dir: PathBuf,
    workers: usize,
    manifest: RunManifest,
}

impl Run {
    fn new(cli: &Cli, argv: Vec<String>) -> CliResult<Self> {
        let command = cli.command.name();
        let mut settings = Settings::load(cli.config.as_deref(), command)?;
        let out_dir = settings.get("out-dir", cli.out_dir.clone(), PathBuf::from("."))?;
        let workers = settings.get("workers", cli.workers, 0usize)?;
        Ok(Run {
            settings,
            out_dir,
            workers,
            manifest: RunManifest::new(command, argv),
        })
    }

    fn output(&self, path: &Path) -> PathBuf {
        output_path(&self.out_dir, path)
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::failure(format!("worker pool: {e}")))
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.to_string(), value);
    }

    fn load_corpus(&mut self, path: &Path) -> CliResult<(Corpus, String)> {
        let corpus = load_corpus(path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
        let hash = self.manifest.add_input(path)?;
        self.manifest.corpus_sha256 = Some(hash.clone());
        Ok((corpus, hash))
    }

    fn load_checkpoint(&mut self, path: &Path, role: &str) -> CliResult<(Checkpoint, String)> {
        if !path.is_file() {
            return Err(CliError::failure(format!("{role} checkpoint {} does not exist", path.display())));
        }
        let ckpt = Checkpoint::load(path).map_err(|e| CliError::failure(format!("{}: {e}", path.display())))?;
        if ckpt.role != role {
            return Err(CliError::failure(format!(
                "{} holds a `{}` checkpoint, expected `{role}`",
                path.display(),
                ckpt.role
            )));
        }
        let hash = self.manifest.add_input(path)?;
        self.manifest.checkpoint_sha256.insert(role.to_string(), hash.clone());
        Ok((ckpt, hash))
    }

    fn finish(mut self, manifest_path: &Path, outputs: &[PathBuf]) -> CliResult<()> {
        self.manifest.config = self.settings.resolved().clone();
        for path in outputs {
            self.manifest.add_output(path)?;
        }
        self.manifest.write(manifest_path)?;
        eprintln!("manifest: {}", manifest_path.display());
        Ok(())
    }
}

pub fn dispatch(cli: Cli, argv: Vec<String>) -> CliResult<()> {
    let mut run = Run::new(&cli, argv)?;
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(&mut run, a).and_then(|p| run.finish(&p.0, &p.1)),
        Command::TrainInternal(a) => train_internal(&mut run, a).and_then(|p| run.finish(&p.0, &p.1)),
        Command::TrainOuter(a) => train_outer(&mut run, a).and_then(|p| run.finish(&p.0, &p.1)),
        Command::Eval(a) => eval(&mut run, a).and_then(|p| run.finish(&p.0, &p.1)),
        Command::Report(a) => report(&mut run, a).and_then(|p| run.finish(&p.0, &p.1)),
    }
}

/// Manifest location and the files it vouches for.
type Produced = (PathBuf, Vec<PathBuf>);

fn manifest_name(path: &Path) -> Value {
    json!(manifest_path_for(path).file_name().map(|n| n.to_string_lossy().into_owned()))
}

fn gen_corpus(run: &mut Run, a: &crate::GenCorpusArgs) -> CliResult<Produced> {
    let s = &mut run.settings;
    let items = s.get("items", a.items, defaults::CORPUS_ITEMS)?;
    let detectors = s.get("detectors", a.detectors, defaults::CORPUS_DETECTORS)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    let out = s.require::<PathBuf>("out", a.out.clone())?;
    let out = run.output(&out);
    run.seed("seed", seed);

    let corpus = generate_corpus(&CorpusConfig::new(items, detectors), seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_corpus(&corpus, &out)?;
    println!(
        "corpus: {} ({} items, {} detectors, {:.1}% positive)",
        out.display(),
        corpus.len(),
        corpus.n_detectors(),
        100.0 * corpus.positive_fraction()
    );
    Ok((manifest_path_for(&out), vec![out]))
}

/// Train/test split recorded in an internal checkpoint, checked against the
/// corpus it was made from.
fn recorded_split(ckpt: &Checkpoint, corpus: &Corpus, corpus_hash: &str) -> CliResult<(Corpus, Corpus)> {
    if let Some(h) = ckpt.extra.get("corpus_sha256").and_then(Value::as_str) {
        if h != corpus_hash {
            return Err(CliError::failure(
                "the corpus differs from the one the internal agent was trained on",
            ));
        }
    }
    let fraction = ckpt.extra.get("test_fraction").and_then(Value::as_f64).unwrap_or(0.1);
    let seed = ckpt.extra.get("split_seed").and_then(Value::as_u64).unwrap_or(0);
    Ok(split_train_test(corpus, fraction, seed)?)
}

fn train_internal(run: &mut Run, a: &crate::TrainInternalArgs) -> CliResult<Produced> {
    let s = &mut run.settings;
    let corpus_path = s.require::<PathBuf>("corpus", a.corpus.clone())?;
    let reward = s.get("reward", a.reward.clone(), "exp3".to_string())?;
    let cost = s.opt::<CostFunction>("cost", None)?;
    let episodes = s.get("episodes", a.episodes, defaults::INTERNAL_EPISODES)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    let restarts = s.get("restarts", a.restarts, defaults::INTERNAL_RESTARTS)?;
    let learning_rate = s.get("learning-rate", a.learning_rate, defaults::INTERNAL_LEARNING_RATE)?;
    let entropy = s.get("entropy", a.entropy, defaults::INTERNAL_ENTROPY)?;
    let gamma = s.get("gamma", a.gamma, 0.99)?;
    let hidden = s.get("hidden", a.hidden, 20usize)?;
    let reward_scale = s.get("reward-scale", a.reward_scale, 1.0)?;
    let test_fraction = s.get("test-fraction", a.test_fraction, defaults::TEST_FRACTION)?;
    let split_seed = s.get("split-seed", a.split_seed, defaults::SPLIT_SEED)?;
    let out = s.require::<PathBuf>("out", a.out.clone())?;
    let metrics = s.opt::<PathBuf>("metrics", a.metrics.clone())?;
    let epoch_dir = s.opt::<PathBuf>("epoch-checkpoints", a.epoch_checkpoints.clone())?;

    let mut setup = RewardSetup::preset(&reward).map_err(|e| CliError::from(e).into_usage())?;
    if let Some(cost) = cost {
        setup = setup.with_cost(cost)?;
    }
    if episodes == 0 {
        return Err(CliError::usage("--episodes must be at least 1"));
    }
    let out = run.output(&out);
    let metrics = metrics.map_or_else(|| out.with_extension("metrics.csv"), |m| run.output(&m));
    let restarts_csv = out.with_extension("restarts.csv");
    let epoch_dir = epoch_dir.map(|d| run.output(&d));
    if let Some(dir) = &epoch_dir {
        fs::create_dir_all(dir)?;
    }
    run.seed("seed", seed);
    run.seed("split-seed", split_seed);

    let (corpus, corpus_hash) = run.load_corpus(&corpus_path)?;
    let (train, test) = split_train_test(&corpus, test_fraction, split_seed)?;
    let config = TrainConfig {
        learning_rate,
        entropy_coef: entropy,
        gamma,
        hidden_dim: hidden,
        reward_scale,
        episodes,
        seed,
        ..TrainConfig::default()
    };

    let rows = Mutex::new(Vec::new());
    let on_epoch = |restart_seed: u64, report: &EpochReport, trainer: &Trainer| -> hsched_core::Result<()> {
        let (acc, elapsed, queries) = if test.is_empty() {
            (String::new(), String::new(), String::new())
        } else {
            let e = evaluate_internal(trainer.net(), test.items())?;
            (num(e.accuracy), num(e.mean_elapsed), num(e.mean_queries))
        };
        let row = vec![
            restart_seed.to_string(),
            report.epoch.to_string(),
            report.episodes.to_string(),
            num(report.mean_return),
            acc,
            elapsed,
            queries,
        ];
        rows.lock().expect("metrics lock").push(((restart_seed, report.epoch), row));
        if let Some(dir) = &epoch_dir {
            let name = format!("internal-seed{restart_seed}-epoch{:04}.json", report.epoch);
            Checkpoint::from_trainer(trainer, "internal").save(dir.join(name))?;
        }
        Ok(())
    };
    let (trainer, reports) = run
        .pool()?
        .install(|| train_internal_restarts_with(&train, &setup, &config, restarts, on_epoch))?;

    let mut rows = rows.into_inner().expect("metrics lock");
    rows.sort_by_key(|(key, _)| *key);
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(_, r)| r).collect();
    write_csv(
        &metrics,
        &[
            "restart_seed",
            "epoch",
            "episodes",
            "mean_train_return",
            "test_accuracy",
            "test_mean_elapsed_s",
            "test_mean_queries",
        ],
        &rows,
    )?;

    let selected = trainer.config().seed;
    let restart_rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                num(r.greedy_return),
                num(r.eval.accuracy),
                num(r.eval.mean_elapsed),
                (r.seed == selected).to_string(),
            ]
        })
        .collect();
    write_csv(
        &restarts_csv,
        &["seed", "greedy_return", "train_accuracy", "train_mean_elapsed_s", "selected"],
        &restart_rows,
    )?;

    let mut ckpt = Checkpoint::from_trainer(&trainer, "internal");
    ckpt.extra.insert("corpus_sha256".into(), json!(corpus_hash));
    ckpt.extra.insert("test_fraction".into(), json!(test_fraction));
    ckpt.extra.insert("split_seed".into(), json!(split_seed));
    ckpt.extra.insert("reward".into(), serde_json::to_value(&setup)?);
    ckpt.extra.insert("restarts".into(), serde_json::to_value(&reports)?);
    ckpt.extra.insert("manifest".into(), manifest_name(&out));
    write_file(&out, ckpt.to_json())?;
    run.seed("selected-seed", selected);

    if !test.is_empty() {
        let e = evaluate_internal(trainer.net(), test.items())?;
        println!(
            "internal agent (seed {selected}): held-out accuracy {:.3}, mean elapsed {:.2} s, {:.2} queries per item",
            e.accuracy, e.mean_elapsed, e.mean_queries
        );
    }
    println!("checkpoint: {}", out.display());
    Ok((manifest_path_for(&out), vec![out, metrics, restarts_csv]))
}

fn train_outer(run: &mut Run, a: &crate::TrainOuterArgs) -> CliResult<Produced> {
    let s = &mut run.settings;
    let n = s.get("n", a.n, defaults::WINDOW)?;
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let corpus_path = s.require::<PathBuf>("corpus", a.corpus.clone())?;
    let internal_path = s.require::<PathBuf>("internal", a.internal.clone())?;
    let epochs = s.get("epochs", a.epochs, defaults::OUTER_EPOCHS)?;
    let episodes = s.opt::<u64>("episodes", a.episodes)?;
    let seed = s.get("seed", a.seed, 0u64)?;
    let learning_rate = s.get("learning-rate", a.learning_rate, defaults::OUTER_LEARNING_RATE)?;
    let entropy = s.get("entropy", a.entropy, 0.01)?;
    let gamma = s.get("gamma", a.gamma, defaults::OUTER_GAMMA)?;
    let hidden = s.get("hidden", a.hidden, 20usize)?;
    let reward_scale = s.get("reward-scale", a.reward_scale, defaults::OUTER_REWARD_SCALE)?;
    let eval_queues = s.get("eval-queues", a.eval_queues, 50usize)?;
    let out = s.require::<PathBuf>("out", a.out.clone())?;
    let metrics = s.opt::<PathBuf>("metrics", a.metrics.clone())?;
    let out = run.output(&out);
    let metrics = metrics.map_or_else(|| out.with_extension("metrics.csv"), |m| run.output(&m));
    run.seed("seed", seed);

    let (corpus, corpus_hash) = run.load_corpus(&corpus_path)?;
    let (internal, internal_hash) = run.load_checkpoint(&internal_path, "internal")?;
    let (train, test) = recorded_split(&internal, &corpus, &corpus_hash)?;
    let internal_net = internal.net.clone();
    let episodes = episodes.unwrap_or(epochs * train.len() as u64);
    if episodes == 0 {
        return Err(CliError::usage("training needs at least one episode"));
    }
    let config = TrainConfig {
        learning_rate,
        entropy_coef: entropy,
        gamma,
        hidden_dim: hidden,
        reward_scale,
        episodes,
        seed,
        ..TrainConfig::default()
    };

    let queues = if test.len() >= n {
        (0..eval_queues as u64)
            .map(|r| sample_queue(test.items(), n, seed, r))
            .collect::<hsched_core::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let pool = run.pool()?;
    let mut rows = Vec::new();
    let trainer = train_outer_with(&train, &internal_net, n, &config, |report, trainer| {
        let score = if queues.is_empty() {
            String::new()
        } else {
            let ctx = SchedulerContext {
                internal: &internal_net,
                outer: Some(trainer.net()),
                aux: None,
            };
            let avgs = pool.install(|| {
                queues
                    .par_iter()
                    .map(|q| run_static(SchedulerKind::Merlin, q, ctx, seed).map(|r| r.avg_completion_seconds))
                    .collect::<hsched_core::Result<Vec<f64>>>()
            })?;
            num(avgs.iter().sum::<f64>() / avgs.len() as f64)
        };
        rows.push(vec![
            report.epoch.to_string(),
            report.episodes.to_string(),
            num(report.mean_return),
            score,
        ]);
        Ok(())
    })?;
    write_csv(
        &metrics,
        &["epoch", "episodes", "mean_train_return", "test_avg_completion_s"],
        &rows,
    )?;

    let aux = AuxModels::build(&train, &internal_net)?;
    let mut ckpt = Checkpoint::from_trainer(&trainer, "outer");
    ckpt.extra.insert("window".into(), json!(n));
    ckpt.extra.insert("corpus_sha256".into(), json!(corpus_hash));
    ckpt.extra.insert("internal_sha256".into(), json!(internal_hash));
    ckpt.extra.insert("aux".into(), serde_json::to_value(&aux)?);
    ckpt.extra.insert("manifest".into(), manifest_name(&out));
    write_file(&out, ckpt.to_json())?;

    if sha256_file(&internal_path)? != internal_hash {
        return Err(CliError::failure("the internal checkpoint changed during training"));
    }
    if let Some(last) = rows.last().filter(|r| !r[3].is_empty()) {
        println!("outer agent: held-out average completion {} s after {} episodes", last[3], last[1]);
    }
    println!("checkpoint: {}", out.display());
    Ok((manifest_path_for(&out), vec![out, metrics]))
}

/// Per-size aggregates in the static summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub queue_size: usize,
    pub reps: usize,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSummary {
    pub manifest: String,
    pub seed: u64,
    pub schedulers: Vec<SchedulerKind>,
    pub sizes: Vec<SizeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRow {
    pub regime: Regime,
    pub scheduler: SchedulerKind,
    pub items: usize,
    pub backlog_at_last_arrival: usize,
    pub last_arrival_s: f64,
    pub drain_s: f64,
    pub avg_completion_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicSummary {
    pub manifest: String,
    pub seed: u64,
    pub arrivals: ArrivalMode,
    pub runs: Vec<DynamicRow>,
}

fn eval(run: &mut Run, a: &crate::EvalArgs) -> CliResult<Produced> {
    let s = &mut run.settings;
    let mode = s.get("mode", a.mode.clone(), "static".to_string())?;
    let spec = s.get("schedulers", a.schedulers.clone(), "all".to_string())?;
    let kinds = parse_scheduler_list(&spec).map_err(|e| CliError::from(e).into_usage())?;
    let corpus_path = s.require::<PathBuf>("corpus", a.corpus.clone())?;
    let internal_path = s.require::<PathBuf>("internal", a.internal.clone())?;
    let outer_path = s.opt::<PathBuf>("outer", a.outer.clone())?;
    let seed = s.get("seed", a.seed, 0u64)?;
    let out = s.get("out", a.out.clone(), PathBuf::from("eval"))?;
    if kinds.contains(&SchedulerKind::Merlin) && outer_path.is_none() {
        return Err(CliError::usage(
            "MERLIN needs an outer checkpoint (--outer), or leave it out of --schedulers",
        ));
    }
    if mode != "static" && mode != "dynamic" {
        return Err(CliError::usage(format!("unknown --mode `{mode}`; use static or dynamic")));
    }
    let out = run.output(&out);
    run.seed("seed", seed);

    let (corpus, corpus_hash) = run.load_corpus(&corpus_path)?;
    let (internal, internal_hash) = run.load_checkpoint(&internal_path, "internal")?;
    let (train, test) = recorded_split(&internal, &corpus, &corpus_hash)?;
    let outer = match &outer_path {
        Some(p) => {
            let (ckpt, _) = run.load_checkpoint(p, "outer")?;
            if let Some(h) = ckpt.extra.get("internal_sha256").and_then(Value::as_str) {
                if h != internal_hash {
                    return Err(CliError::failure(
                        "the outer checkpoint was trained against a different internal checkpoint",
                    ));
                }
            }
            Some(ckpt)
        }
        None => None,
    };
    let aux = match outer.as_ref().and_then(|o| o.extra.get("aux")) {
        Some(v) => serde_json::from_value(v.clone())?,
        None => AuxModels::build(&train, &internal.net)?,
    };
    let ctx = SchedulerContext {
        internal: &internal.net,
        outer: outer.as_ref().map(|o| &o.net),
        aux: Some(&aux),
    };
    fs::create_dir_all(&out)?;
    let outputs = if mode == "static" {
        eval_static(run, a, &kinds, test.items(), ctx, seed, &out)?
    } else {
        eval_dynamic(run, a, &kinds, test.items(), ctx, seed, &out)?
    };
    Ok((out.join(EVAL_MANIFEST), outputs))
}

fn eval_static(
    run: &mut Run,
    a: &crate::EvalArgs,
    kinds: &[SchedulerKind],
    pool: &[hsched_core::corpus::FileItem],
    ctx: SchedulerContext,
    seed: u64,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    let s = &mut run.settings;
    let sizes = parse_sizes(&s.get("sizes", a.sizes.clone(), "10".to_string())?)?;
    let reps = s.opt::<usize>("reps", a.reps)?;
    if reps == Some(0) {
        return Err(CliError::usage("--reps must be at least 1"));
    }

    let mut run_rows = Vec::new();
    let mut summaries = Vec::new();
    for &size in &sizes {
        let reps = reps.unwrap_or(if size == 10 { 500 } else { 100 });
        let result = run_replicated(kinds, pool, size, reps, seed, ctx, run.workers)?;
        for rep in &result.replications {
            let ids: Vec<String> = rep.item_ids.iter().map(u64::to_string).collect();
            for r in &rep.runs {
                run_rows.push(vec![
                    size.to_string(),
                    rep.index.to_string(),
                    r.scheduler.name().to_string(),
                    num(r.avg_completion_seconds),
                    ids.join(" "),
                ]);
            }
        }
        let line: Vec<String> = result
            .aggregates
            .iter()
            .map(|g| format!("{} {:.2}", g.scheduler, g.mean))
            .collect();
        println!("|Q|={size} ({reps} reps): {}", line.join("  "));
        summaries.push(SizeSummary {
            queue_size: size,
            reps,
            aggregates: result.aggregates,
        });
    }

    let runs_csv = out.join("static_runs.csv");
    write_csv(
        &runs_csv,
        &["queue_size", "replication", "scheduler", "avg_completion_s", "item_ids"],
        &run_rows,
    )?;
    let mut header = vec!["queue_size", "reps"];
    header.extend(kinds.iter().map(|k| k.name()));
    let summary_rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|sz| {
            let mut row = vec![sz.queue_size.to_string(), sz.reps.to_string()];
            row.extend(sz.aggregates.iter().map(|g| num(g.mean)));
            row
        })
        .collect();
    let summary_csv = out.join("static_summary.csv");
    write_csv(&summary_csv, &header, &summary_rows)?;
    let summary = StaticSummary {
        manifest: EVAL_MANIFEST.into(),
        seed,
        schedulers: kinds.to_vec(),
        sizes: summaries,
    };
    let summary_json = out.join(STATIC_SUMMARY_JSON);
    write_file(&summary_json, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(vec![runs_csv, summary_csv, summary_json])
}

fn parse_regimes(spec: &str) -> CliResult<Vec<Regime>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(Regime::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let r = Regime::from_name(part).map_err(|e| CliError::from(e).into_usage())?;
        if !out.contains(&r) {
            out.push(r);
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no regimes given"));
    }
    Ok(out)
}

fn eval_dynamic(
    run: &mut Run,
    a: &crate::EvalArgs,
    kinds: &[SchedulerKind],
    pool: &[hsched_core::corpus::FileItem],
    ctx: SchedulerContext,
    seed: u64,
    out: &Path,
) -> CliResult<Vec<PathBuf>> {
    let s = &mut run.settings;
    let regimes = parse_regimes(&s.get("regime", a.regime.clone(), "all".to_string())?)?;
    let mode = match s.get("arrivals", a.arrivals.clone(), "batch".to_string())?.as_str() {
        "batch" => ArrivalMode::Batch,
        "rate" => ArrivalMode::Rate,
        other => return Err(CliError::usage(format!("unknown --arrivals `{other}`; use batch or rate"))),
    };
    let defaults = ArrivalConfig::default();
    let base = ArrivalConfig {
        mode,
        total_items: s.get("stream-items", a.stream_items, defaults.total_items)?,
        interval_seconds: s.get("interval", a.interval, defaults.interval_seconds)?,
        mu: s.get("mu", a.mu, defaults.mu)?,
        sigma: s.get("sigma", a.sigma, defaults.sigma)?,
        batch_size: s.opt("batch-size", a.batch_size)?,
        initial_items: s.get("initial-items", a.initial_items, defaults.initial_items)?,
        ..defaults
    };
    base.validate()?;

    let jobs: Vec<(Regime, SchedulerKind)> = regimes
        .iter()
        .flat_map(|&r| kinds.iter().map(move |&k| (r, k)))
        .collect();
    let traces = run.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(regime, kind)| {
                let cfg = ArrivalConfig {
                    regime,
                    ..base.clone()
                };
                run_dynamic(kind, &cfg, pool, ctx, seed)
            })
            .collect::<hsched_core::Result<Vec<_>>>()
    })?;

    let mut backlog_rows = Vec::new();
    let mut rows = Vec::new();
    for t in &traces {
        for p in &t.points {
            backlog_rows.push(vec![
                t.regime.name().to_string(),
                t.scheduler.name().to_string(),
                num(p.clock),
                p.backlog.to_string(),
            ]);
        }
        let row = DynamicRow {
            regime: t.regime,
            scheduler: t.scheduler,
            items: t.records.len(),
            backlog_at_last_arrival: t.backlog_at_last_arrival,
            last_arrival_s: t.last_arrival_time,
            drain_s: t.drain_time,
            avg_completion_s: average_completion_time(&t.records)?,
        };
        println!(
            "{:<9} {:<6} backlog at last arrival {:>4}, drained at {:.1} s, avg completion {:.1} s",
            row.regime.name(),
            row.scheduler.name(),
            row.backlog_at_last_arrival,
            row.drain_s,
            row.avg_completion_s
        );
        rows.push(row);
    }

    let backlog_csv = out.join("backlog.csv");
    write_csv(&backlog_csv, &["regime", "scheduler", "clock_s", "backlog"], &backlog_rows)?;
    let summary_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.regime.name().to_string(),
                r.scheduler.name().to_string(),
                r.items.to_string(),
                r.backlog_at_last_arrival.to_string(),
                num(r.last_arrival_s),
                num(r.drain_s),
                num(r.avg_completion_s),
            ]
        })
        .collect();
    let summary_csv = out.join("dynamic_summary.csv");
    write_csv(
        &summary_csv,
        &[
            "regime",
            "scheduler",
            "items",
            "backlog_at_last_arrival",
            "last_arrival_s",
            "drain_s",
            "avg_completion_s",
        ],
        &summary_rows,
    )?;
    let summary = DynamicSummary {
        manifest: EVAL_MANIFEST.into(),
        seed,
        arrivals: mode,
        runs: rows,
    };
    let summary_json = out.join(DYNAMIC_SUMMARY_JSON);
    write_file(&summary_json, serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(vec![backlog_csv, summary_csv, summary_json])
}

fn report(run: &mut Run, a: &crate::ReportArgs) -> CliResult<Produced> {
    let s = &mut run.settings;
    let input = s.require::<PathBuf>("input", a.input.clone())?;
    let out = s.opt::<PathBuf>("out", a.out.clone())?;
    let out = match out {
        Some(p) => run.output(&p),
        None => input.join("report.md"),
    };

    let mut md = String::from("# Scheduler evaluation\n");
    let mut found = false;
    let static_path = input.join(STATIC_SUMMARY_JSON);
    if static_path.is_file() {
        run.manifest.add_input(&static_path)?;
        let summary: StaticSummary = serde_json::from_str(&fs::read_to_string(&static_path)?)?;
        md.push_str(&render_static(&summary));
        found = true;
    }
    let dynamic_path = input.join(DYNAMIC_SUMMARY_JSON);
    if dynamic_path.is_file() {
        run.manifest.add_input(&dynamic_path)?;
        let summary: DynamicSummary = serde_json::from_str(&fs::read_to_string(&dynamic_path)?)?;
        md.push_str(&render_dynamic(&summary));
        found = true;
    }
    if !found {
        return Err(CliError::failure(format!(
            "{} holds neither {STATIC_SUMMARY_JSON} nor {DYNAMIC_SUMMARY_JSON}",
            input.display()
        )));
    }
    write_file(&out, &md)?;
    println!("report: {}", out.display());
    Ok((manifest_path_for(&out), vec![out]))
}

fn table_header(md: &mut String, cols: &[String]) {
    let _ = writeln!(md, "| {} |", cols.join(" | "));
    let _ = writeln!(md, "|{}", "---|".repeat(cols.len()));
}

pub fn render_static(summary: &StaticSummary) -> String {
    let mut md = String::from("\n## Static queues\n\nMean average completion time in seconds (sample sd in parentheses).\n\n");
    let mut cols = vec!["size".to_string(), "reps".to_string()];
    cols.extend(summary.schedulers.iter().map(|k| k.name().to_string()));
    table_header(&mut md, &cols);
    for sz in &summary.sizes {
        let cells: Vec<String> = sz
            .aggregates
            .iter()
            .map(|g| format!("{:.2} ({:.2})", g.mean, g.sd))
            .collect();
        let _ = writeln!(md, "| {} | {} | {} |", sz.queue_size, sz.reps, cells.join(" | "));
    }
    if summary.schedulers.contains(&SchedulerKind::Fcfs) {
        md.push_str("\nChange against FCFS (negative is faster).\n\n");
        let mut cols = vec!["size".to_string()];
        cols.extend(summary.schedulers.iter().map(|k| k.name().to_string()));
        table_header(&mut md, &cols);
        for sz in &summary.sizes {
            let fcfs = sz
                .aggregates
                .iter()
                .find(|g| g.scheduler == SchedulerKind::Fcfs)
                .map_or(f64::NAN, |g| g.mean);
            let cells: Vec<String> = sz
                .aggregates
                .iter()
                .map(|g| {
                    if fcfs > 0.0 {
                        format!("{:+.1}%", 100.0 * (g.mean / fcfs - 1.0))
                    } else {
                        "n/a".to_string()
                    }
                })
                .collect();
            let _ = writeln!(md, "| {} | {} |", sz.queue_size, cells.join(" | "));
        }
    }
    md
}

pub fn render_dynamic(summary: &DynamicSummary) -> String {
    let mut md = String::from("\n## Arrival streams\n\n");
    let cols: Vec<String> = [
        "regime",
        "scheduler",
        "items",
        "backlog at last arrival",
        "last arrival (s)",
        "drained at (s)",
        "avg completion (s)",
    ]
    .iter()
    .map(|c| c.to_string())
    .collect();
    table_header(&mut md, &cols);
    for r in &summary.runs {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:.1} | {:.1} | {:.2} |",
            r.regime.name(),
            r.scheduler.name(),
            r.items,
            r.backlog_at_last_arrival,
            r.last_arrival_s,
            r.drain_s,
            r.avg_completion_s
        );
    }
    md
}
