//! Two-stage training: the internal agent first, then the outer agent against
//! the frozen internal policy.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FileItem, Label};
use crate::error::{Error, Result};
use crate::internal::{
    action_count, encode_internal, internal_reset, internal_step, legal_actions, InternalAction,
    InternalState, RewardSetup,
};
use crate::outer::{internal_greedy_action, OuterEnv, DEFAULT_OUTER_PENALTY};
use crate::rl::{Environment, PolicyNet, TrainConfig, Trainer};

/// Single-item environment over one corpus item.
pub struct InternalEnv<'a> {
    item: &'a FileItem,
    setup: &'a RewardSetup,
    state: InternalState,
}

impl<'a> InternalEnv<'a> {
    pub fn new(item: &'a FileItem, setup: &'a RewardSetup) -> Self {
        InternalEnv {
            item,
            setup,
            state: internal_reset(item),
        }
    }

    pub fn state(&self) -> &InternalState {
        &self.state
    }
}

impl Environment for InternalEnv<'_> {
    fn observation(&self) -> Vec<f64> {
        encode_internal(&self.state)
    }

    fn action_mask(&self) -> Vec<bool> {
        legal_actions(&self.state)
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        let action = InternalAction::from_index(action, self.state.n_detectors())?;
        let step = internal_step(&self.state, action, self.item, self.setup)?;
        self.state = step.state;
        Ok((step.reward, step.done))
    }
}

/// Progress report handed to the per-epoch callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based epoch number.
    pub epoch: u64,
    pub episodes: u64,
    pub mean_return: f64,
    /// False for a trailing epoch cut short by the episode budget.
    pub complete: bool,
}

fn run_epochs<F, C>(
    trainer: &mut Trainer,
    epoch_len: u64,
    mut episode: F,
    mut on_epoch: C,
) -> Result<()>
where
    F: FnMut(&mut Trainer) -> Result<f64>,
    C: FnMut(&EpochReport, &Trainer) -> Result<()>,
{
    let total = trainer.config().episodes;
    let epoch_len = epoch_len.max(1);
    let mut sum = 0.0;
    let mut count = 0u64;
    for e in 0..total {
        sum += episode(trainer)?;
        count += 1;
        let finished = e + 1;
        if finished % epoch_len == 0 || finished == total {
            let report = EpochReport {
                epoch: finished.div_ceil(epoch_len),
                episodes: finished,
                mean_return: sum / count as f64,
                complete: finished % epoch_len == 0,
            };
            on_epoch(&report, trainer)?;
            sum = 0.0;
            count = 0;
        }
    }
    Ok(())
}

/// Trains the internal policy with items drawn uniformly from `train`.
pub fn train_internal(train: &Corpus, setup: &RewardSetup, config: &TrainConfig) -> Result<PolicyNet> {
    Ok(train_internal_with(train, setup, config, |_, _| Ok(()))?.into_net())
}

pub fn train_internal_with<C>(
    train: &Corpus,
    setup: &RewardSetup,
    config: &TrainConfig,
    on_epoch: C,
) -> Result<Trainer>
where
    C: FnMut(&EpochReport, &Trainer) -> Result<()>,
{
    if train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let k = train.n_detectors();
    let mut trainer = Trainer::new(k, action_count(k), config.clone())?;
    let items = train.items();
    run_epochs(
        &mut trainer,
        items.len() as u64,
        |t| {
            let idx = t.rng_mut().random_range(0..items.len());
            let mut env = InternalEnv::new(&items[idx], setup);
            Ok(t.run_episode(&mut env)?.total_reward)
        },
        on_epoch,
    )?;
    Ok(trainer)
}

/// Trains an outer policy with window `n` on random `n`-item queues from
/// `train`. The internal policy is only read.
pub fn train_outer(train: &Corpus, internal: &PolicyNet, n: usize, config: &TrainConfig) -> Result<PolicyNet> {
    Ok(train_outer_with(train, internal, n, config, |_, _| Ok(()))?.into_net())
}

pub fn train_outer_with<C>(
    train: &Corpus,
    internal: &PolicyNet,
    n: usize,
    config: &TrainConfig,
    on_epoch: C,
) -> Result<Trainer>
where
    C: FnMut(&EpochReport, &Trainer) -> Result<()>,
{
    if n == 0 {
        return Err(Error::usage("window size must be at least 1"));
    }
    if train.len() < n {
        return Err(Error::config(format!(
            "training split has {} items, fewer than the window {n}",
            train.len()
        )));
    }
    let k = train.n_detectors();
    if internal.input_dim() != k || internal.action_dim() != action_count(k) {
        return Err(Error::usage(format!(
            "internal network is {}x{}, corpus needs {k}x{}",
            internal.input_dim(),
            internal.action_dim(),
            action_count(k)
        )));
    }
    let mut trainer = Trainer::new(n * (k + 1), n, config.clone())?;
    let items = train.items();
    run_epochs(
        &mut trainer,
        items.len() as u64,
        |t| {
            let picks = sample(t.rng_mut(), items.len(), n);
            let queue: Vec<FileItem> = picks.iter().map(|i| items[i].clone()).collect();
            let mut env = OuterEnv::new(&queue, n, internal, DEFAULT_OUTER_PENALTY)?;
            Ok(t.run_episode(&mut env)?.total_reward)
        },
        on_epoch,
    )?;
    Ok(trainer)
}

/// What the frozen internal policy does with one item when run alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalTrace {
    pub actions: Vec<InternalAction>,
    pub elapsed: f64,
    pub verdict: Label,
}

pub fn run_internal_alone(internal: &PolicyNet, item: &FileItem) -> Result<InternalTrace> {
    let mut state = internal_reset(item);
    let mut actions = Vec::new();
    while !state.is_terminal() {
        let action = internal_greedy_action(internal, &state)?;
        let (next, _, _) = crate::internal::apply_action(&state, action, item)?;
        actions.push(action);
        state = next;
    }
    Ok(InternalTrace {
        actions,
        elapsed: state.elapsed_seconds(),
        verdict: state.verdict().expect("terminal"),
    })
}

/// Greedy performance of an internal policy over a set of items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InternalEval {
    pub accuracy: f64,
    pub mean_elapsed: f64,
    pub sd_elapsed: f64,
    pub mean_queries: f64,
}

pub fn evaluate_internal(internal: &PolicyNet, items: &[FileItem]) -> Result<InternalEval> {
    if items.is_empty() {
        return Err(Error::usage("cannot evaluate on zero items"));
    }
    let mut correct = 0usize;
    let mut times = Vec::with_capacity(items.len());
    let mut queries = 0usize;
    for item in items {
        let trace = run_internal_alone(internal, item)?;
        correct += usize::from(trace.verdict == item.label);
        queries += trace.actions.len() - 1;
        times.push(trace.elapsed);
    }
    let n = items.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    Ok(InternalEval {
        accuracy: correct as f64 / n,
        mean_elapsed: mean,
        sd_elapsed: var.sqrt(),
        mean_queries: queries as f64 / n,
    })
}

/// Mean discounted return the greedy policy earns over `items`.
pub fn greedy_return(internal: &PolicyNet, items: &[FileItem], setup: &RewardSetup, gamma: f64) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::usage("cannot evaluate on zero items"));
    }
    let mut total = 0.0;
    for item in items {
        let mut state = internal_reset(item);
        let mut discount = 1.0;
        while !state.is_terminal() {
            let action = internal_greedy_action(internal, &state)?;
            let step = internal_step(&state, action, item, setup)?;
            total += discount * step.reward;
            discount *= gamma;
            state = step.state;
        }
    }
    Ok(total / items.len() as f64)
}

/// One internal training run among several restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub seed: u64,
    pub greedy_return: f64,
    pub eval: InternalEval,
}

/// Trains `restarts` internal policies with seeds `config.seed`,
/// `config.seed + 1`, ... and keeps the one whose greedy policy earns the
/// highest discounted return on `train`; ties keep the earliest seed.
pub fn train_internal_restarts(
    train: &Corpus,
    setup: &RewardSetup,
    config: &TrainConfig,
    restarts: usize,
) -> Result<(PolicyNet, Vec<RestartReport>)> {
    let (trainer, reports) = train_internal_restarts_with(train, setup, config, restarts, |_, _, _| Ok(()))?;
    Ok((trainer.into_net(), reports))
}

/// Like [`train_internal_restarts`], returning the winning trainer. Restarts
/// run in parallel, so `on_epoch` receives the restart's seed and may be
/// called from several threads.
pub fn train_internal_restarts_with<C>(
    train: &Corpus,
    setup: &RewardSetup,
    config: &TrainConfig,
    restarts: usize,
    on_epoch: C,
) -> Result<(Trainer, Vec<RestartReport>)>
where
    C: Fn(u64, &EpochReport, &Trainer) -> Result<()> + Sync,
{
    if restarts == 0 {
        return Err(Error::usage("restarts must be at least 1"));
    }
    let runs = (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(r),
                ..config.clone()
            };
            let trainer = train_internal_with(train, setup, &cfg, |report, t| on_epoch(cfg.seed, report, t))?;
            let report = RestartReport {
                seed: cfg.seed,
                greedy_return: greedy_return(trainer.net(), train.items(), setup, cfg.gamma)?,
                eval: evaluate_internal(trainer.net(), train.items())?,
            };
            Ok((trainer, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, (_, report)) in runs.iter().enumerate() {
        if report.greedy_return > runs[best].1.greedy_return {
            best = i;
        }
    }
    let reports = runs.iter().map(|(_, r)| r.clone()).collect();
    let trainer = runs.into_iter().nth(best).expect("at least one restart").0;
    Ok((trainer, reports))
}
