//! Experiment harnesses: static queues, replicated comparisons and dynamic
//! arrival streams.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{make_scheduler, SchedulerContext, SchedulerKind};
use crate::corpus::FileItem;
use crate::error::{Error, Result};
use crate::outer::{outer_reset, outer_step, CompletionRecord, QueueState, ServiceEvent};
use crate::seed::{rng_for, Stream};

/// Penalty passed to the environment; schedulers never trigger it because an
/// unselectable pick aborts the run instead.
const SIM_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRunResult {
    pub scheduler: SchedulerKind,
    pub queue_size: usize,
    pub records: Vec<CompletionRecord>,
    pub avg_completion_seconds: f64,
    pub seed: u64,
    pub events: Vec<ServiceEvent>,
}

/// Mean of `processing + waiting` over the records.
pub fn average_completion_time(records: &[CompletionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::usage("no completion records to average"));
    }
    let total: f64 = records.iter().map(|r| r.processing + r.waiting).sum();
    Ok(total / records.len() as f64)
}

fn window_for(ctx: &SchedulerContext, queue_len: usize) -> usize {
    ctx.outer.map_or(queue_len.max(1), |o| o.action_dim())
}

fn initial_queue(items: &[FileItem], window: usize) -> Result<QueueState> {
    if items.len() <= window {
        outer_reset(items, window)
    } else {
        QueueState::open(items, window)
    }
}

/// Runs the scheduler until the queue is empty, failing if it ever picks a
/// slot that is padded, finished or out of range.
fn drive(
    qs: &mut QueueState,
    scheduler: &mut dyn crate::baselines::Scheduler,
    ctx: &SchedulerContext,
    records: &mut Vec<CompletionRecord>,
) -> Result<()> {
    let slot = scheduler.next_item(qs)?;
    if !qs.slot(slot).is_some_and(|s| s.is_unfinished()) {
        return Err(Error::usage(format!(
            "{} selected slot {slot}, which is not an unfinished item",
            scheduler.kind()
        )));
    }
    let step = outer_step(qs, slot, ctx.internal, SIM_PENALTY)?;
    if let Some(rec) = step.completion {
        records.push(rec);
    }
    Ok(())
}

pub fn run_static(
    kind: SchedulerKind,
    items: &[FileItem],
    ctx: SchedulerContext,
    seed: u64,
) -> Result<StaticRunResult> {
    if items.is_empty() {
        return Err(Error::usage("cannot run an empty queue"));
    }
    let mut scheduler = make_scheduler(kind, ctx)?;
    let mut qs = initial_queue(items, window_for(&ctx, items.len()))?;
    let mut records = Vec::with_capacity(items.len());
    while qs.unfinished_count() > 0 {
        drive(&mut qs, scheduler.as_mut(), &ctx, &mut records)?;
    }
    records.sort_by_key(|r| r.slot);
    Ok(StaticRunResult {
        scheduler: kind,
        queue_size: items.len(),
        avg_completion_seconds: average_completion_time(&records)?,
        records,
        seed,
        events: qs.events().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheduler: SchedulerKind,
    pub queue_size: usize,
    pub reps: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replication.
    pub sd: f64,
}

impl Aggregate {
    pub fn from_values(scheduler: SchedulerKind, queue_size: usize, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::usage("cannot aggregate zero replications"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Aggregate {
            scheduler,
            queue_size,
            reps: values.len(),
            mean,
            sd,
        })
    }
}

/// One replication: the sampled queue and every scheduler's run on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: u64,
    pub item_ids: Vec<u64>,
    pub runs: Vec<StaticRunResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicatedResult {
    pub queue_size: usize,
    pub seed: u64,
    pub aggregates: Vec<Aggregate>,
    pub replications: Vec<Replication>,
}

impl ReplicatedResult {
    pub fn aggregate(&self, kind: SchedulerKind) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.scheduler == kind)
    }
}

/// The `rep`-th queue: `size` distinct items drawn from `pool`.
pub fn sample_queue(pool: &[FileItem], size: usize, seed: u64, rep: u64) -> Result<Vec<FileItem>> {
    if size == 0 || size > pool.len() {
        return Err(Error::config(format!(
            "cannot draw {size} distinct items from a pool of {}",
            pool.len()
        )));
    }
    let mut rng = rng_for(seed, Stream::QueueSample, rep);
    Ok(sample(&mut rng, pool.len(), size)
        .iter()
        .map(|i| pool[i].clone())
        .collect())
}

/// Runs every scheduler in `kinds` on `reps` sampled queues. Each replication
/// hands the same items to all schedulers. `workers` bounds the thread count
/// (0 = rayon's default); results do not depend on it.
pub fn run_replicated(
    kinds: &[SchedulerKind],
    pool: &[FileItem],
    queue_size: usize,
    reps: usize,
    seed: u64,
    ctx: SchedulerContext,
    workers: usize,
) -> Result<ReplicatedResult> {
    if reps == 0 {
        return Err(Error::usage("need at least one replication"));
    }
    if kinds.is_empty() {
        return Err(Error::usage("no schedulers to compare"));
    }
    let one = |rep: u64| -> Result<Replication> {
        let items = sample_queue(pool, queue_size, seed, rep)?;
        let runs = kinds
            .iter()
            .map(|&k| run_static(k, &items, ctx, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Replication {
            index: rep,
            item_ids: items.iter().map(|i| i.id).collect(),
            runs,
        })
    };
    let pool_threads = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    let replications = pool_threads.install(|| {
        (0..reps as u64)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()
    })?;
    let aggregates = kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let values: Vec<f64> = replications
                .iter()
                .map(|r| r.runs[i].avg_completion_seconds)
                .collect();
            Aggregate::from_values(k, queue_size, &values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicatedResult {
        queue_size,
        seed,
        aggregates,
        replications,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Overload,
    Balanced,
    Underload,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Overload, Regime::Balanced, Regime::Underload];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Overload => "overload",
            Regime::Balanced => "balanced",
            Regime::Underload => "underload",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown regime `{name}`; valid regimes: overload, balanced, underload"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalMode {
    /// A batch of items every `interval_seconds`; the batch size depends on
    /// the regime.
    Batch,
    /// One item per interval; the interval depends on the regime.
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalConfig {
    pub regime: Regime,
    pub mode: ArrivalMode,
    pub interval_seconds: f64,
    /// Mean and spread of per-item processing time that set the regimes.
    pub mu: f64,
    pub sigma: f64,
    pub total_items: usize,
    /// Overrides the regime's batch size in batch mode.
    pub batch_size: Option<usize>,
    /// Items present at time zero, before the first arrival.
    pub initial_items: usize,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        ArrivalConfig {
            regime: Regime::Balanced,
            mode: ArrivalMode::Batch,
            interval_seconds: 7.8,
            mu: 7.8,
            sigma: 1.9,
            total_items: 1000,
            batch_size: None,
            initial_items: 0,
        }
    }
}

impl ArrivalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("interval", self.interval_seconds), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0 && self.sigma < self.mu) {
            return Err(Error::config("sigma must lie in [0, mu)"));
        }
        if self.total_items == 0 && self.initial_items == 0 {
            return Err(Error::config("the stream needs at least one item"));
        }
        Ok(())
    }

    /// Items per batch: ceil(mu + sigma), ceil(mu), ceil(mu - sigma).
    pub fn regime_batch_size(&self) -> usize {
        if let Some(b) = self.batch_size {
            return b;
        }
        let v = match self.regime {
            Regime::Overload => self.mu + self.sigma,
            Regime::Balanced => self.mu,
            Regime::Underload => self.mu - self.sigma,
        };
        v.ceil() as usize
    }

    /// Seconds between single arrivals in rate mode.
    pub fn regime_interval(&self) -> f64 {
        match self.regime {
            Regime::Overload => self.mu - self.sigma,
            Regime::Balanced => self.mu,
            Regime::Underload => self.mu + self.sigma,
        }
    }

    /// Arrival instants of the `total_items` streamed items, in order.
    pub fn arrival_times(&self) -> Vec<f64> {
        match self.mode {
            ArrivalMode::Batch => {
                let b = self.regime_batch_size();
                if b == 0 {
                    return Vec::new();
                }
                (0..self.total_items)
                    .map(|i| (i / b) as f64 * self.interval_seconds)
                    .collect()
            }
            ArrivalMode::Rate => {
                let gap = self.regime_interval();
                (0..self.total_items).map(|i| i as f64 * gap).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacklogPoint {
    pub clock: f64,
    pub backlog: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacklogTrace {
    pub scheduler: SchedulerKind,
    pub regime: Regime,
    pub points: Vec<BacklogPoint>,
    /// Unfinished items right after the last arrival became visible.
    pub backlog_at_last_arrival: usize,
    pub last_arrival_time: f64,
    /// Clock when the queue emptied for good.
    pub drain_time: f64,
    pub records: Vec<CompletionRecord>,
}

impl BacklogTrace {
    pub fn final_backlog(&self) -> usize {
        self.points.last().map_or(0, |p| p.backlog)
    }
}

/// The streamed items: initial items first, then arrivals, drawn with
/// replacement from `pool`.
pub fn sample_stream(pool: &[FileItem], count: usize, seed: u64) -> Result<Vec<FileItem>> {
    if pool.is_empty() {
        return Err(Error::config("arrival pool is empty"));
    }
    let mut rng = rng_for(seed, Stream::Arrivals, 0);
    Ok((0..count)
        .map(|_| pool[rng.random_range(0..pool.len())].clone())
        .collect())
}

pub fn run_dynamic(
    kind: SchedulerKind,
    config: &ArrivalConfig,
    pool: &[FileItem],
    ctx: SchedulerContext,
    seed: u64,
) -> Result<BacklogTrace> {
    config.validate()?;
    let times = config.arrival_times();
    let stream = sample_stream(pool, config.initial_items + times.len(), seed)?;
    let (initial, arrivals) = stream.split_at(config.initial_items);
    let k = stream[0].n_detectors();
    let window = ctx.outer.map_or(10, |o| o.action_dim());

    let mut scheduler = make_scheduler(kind, ctx)?;
    let mut qs = QueueState::empty(window, k)?;
    for item in initial {
        qs.push_arrival(item.clone(), 0.0)?;
    }
    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut next = 0;
    let mut backlog_at_last_arrival = qs.unfinished_count();
    let last_arrival_time = times.last().copied().unwrap_or(0.0);
    loop {
        let mut arrived = false;
        while next < arrivals.len() && times[next] <= qs.clock() {
            qs.push_arrival(arrivals[next].clone(), times[next])?;
            next += 1;
            arrived = true;
        }
        let backlog = qs.unfinished_count();
        if arrived && next == arrivals.len() {
            backlog_at_last_arrival = backlog;
        }
        if points.last().is_none_or(|p: &BacklogPoint| p.backlog != backlog || arrived) {
            points.push(BacklogPoint {
                clock: qs.clock(),
                backlog,
            });
        }
        if backlog == 0 {
            if next == arrivals.len() {
                break;
            }
            qs.advance_idle(times[next])?;
            continue;
        }
        drive(&mut qs, scheduler.as_mut(), &ctx, &mut records)?;
    }
    Ok(BacklogTrace {
        scheduler: kind,
        regime: config.regime,
        points,
        backlog_at_last_arrival,
        last_arrival_time,
        drain_time: qs.clock(),
        records,
    })
}
