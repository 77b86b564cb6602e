//! Baseline schedulers and the learned scheduler behind one interface.
//!
//! Every scheduler answers the same question, "which slot runs next?", and
//! leaves the actual work to the frozen internal policy through
//! [`outer_step`](crate::outer::outer_step). Only the outer agent and MLFQ
//! preempt; the rest run a chosen item until it is classified.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FileItem};
use crate::error::{Error, Result};
use crate::hierarchy::{candidates, hierarchical_select, ReductionTrace};
use crate::internal::InternalAction;
use crate::outer::{internal_greedy_action, QueueState};
use crate::rl::PolicyNet;
use crate::training::run_internal_alone;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    Fcfs,
    Sff,
    Lff,
    Mlfq,
    Sept,
    Cbpt,
    Spt,
    Lpt,
    Merlin,
}

/// What a scheduler is allowed to know beyond the queue matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Information {
    None,
    FileSize,
    /// Runtime of the next internal action.
    NextActionRuntime,
    RuntimeDistribution,
    DetectorConfidences,
    OracleTotals,
    LearnedPolicy,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 9] = [
        SchedulerKind::Fcfs,
        SchedulerKind::Sff,
        SchedulerKind::Lff,
        SchedulerKind::Mlfq,
        SchedulerKind::Sept,
        SchedulerKind::Cbpt,
        SchedulerKind::Spt,
        SchedulerKind::Lpt,
        SchedulerKind::Merlin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Fcfs => "FCFS",
            SchedulerKind::Sff => "SFF",
            SchedulerKind::Lff => "LFF",
            SchedulerKind::Mlfq => "MLFQ",
            SchedulerKind::Sept => "SEPT",
            SchedulerKind::Cbpt => "CBPT",
            SchedulerKind::Spt => "SPT",
            SchedulerKind::Lpt => "LPT",
            SchedulerKind::Merlin => "MERLIN",
        }
    }

    /// Case-insensitive lookup; the error lists every valid name.
    pub fn from_name(name: &str) -> Result<Self> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| {
                let names: Vec<&str> = SchedulerKind::ALL.iter().map(|k| k.name()).collect();
                Error::usage(format!(
                    "unknown scheduler `{name}`; valid names: {}",
                    names.join(", ")
                ))
            })
    }

    pub fn information(self) -> Information {
        match self {
            SchedulerKind::Fcfs => Information::None,
            SchedulerKind::Sff | SchedulerKind::Lff => Information::FileSize,
            SchedulerKind::Mlfq => Information::NextActionRuntime,
            SchedulerKind::Sept => Information::RuntimeDistribution,
            SchedulerKind::Cbpt => Information::DetectorConfidences,
            SchedulerKind::Spt | SchedulerKind::Lpt => Information::OracleTotals,
            SchedulerKind::Merlin => Information::LearnedPolicy,
        }
    }

    /// Realistic schedulers only use what a deployed system would know.
    pub fn is_realistic(self) -> bool {
        !matches!(
            self,
            SchedulerKind::Sept | SchedulerKind::Cbpt | SchedulerKind::Spt | SchedulerKind::Lpt
        )
    }

    pub fn is_preemptive(self) -> bool {
        matches!(self, SchedulerKind::Mlfq | SchedulerKind::Merlin)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a comma-separated list of names, or `all`.
pub fn parse_scheduler_list(spec: &str) -> Result<Vec<SchedulerKind>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(SchedulerKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let kind = SchedulerKind::from_name(part)?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(Error::usage("no schedulers given"));
    }
    Ok(out)
}

pub trait Scheduler {
    fn kind(&self) -> SchedulerKind;

    /// Slot to advance by one internal action. Errors when nothing is left.
    fn next_item(&mut self, qs: &QueueState) -> Result<usize>;
}

fn require_unfinished(qs: &QueueState) -> Result<()> {
    if qs.unfinished_count() == 0 {
        Err(Error::usage("every item in the queue is already done"))
    } else {
        Ok(())
    }
}

/// Total seconds the frozen policy spends on each item when run alone.
pub fn oracle_totals(items: &[FileItem], internal: &PolicyNet) -> Result<BTreeMap<u64, f64>> {
    items
        .iter()
        .map(|item| Ok((item.id, run_internal_alone(internal, item)?.elapsed)))
        .collect()
}

/// Empirical processing-time model used by SEPT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeptModel {
    /// Sorted per-item totals measured on the training split.
    pub totals: Vec<f64>,
    pub mean_total: f64,
    /// Entry `m`: mean remaining time of items that have had `m` detectors
    /// queried and are still unfinished; `None` when no training item got
    /// that far.
    pub remaining_by_queries: Vec<Option<f64>>,
}

impl SeptModel {
    pub fn expected_remaining(&self, queried: usize) -> f64 {
        self.remaining_by_queries
            .get(queried)
            .copied()
            .flatten()
            .unwrap_or(self.mean_total)
    }
}

pub fn build_sept_model(train: &Corpus, internal: &PolicyNet) -> Result<SeptModel> {
    if train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let k = train.n_detectors();
    let mut sums = vec![0.0; k + 1];
    let mut counts = vec![0usize; k + 1];
    let mut totals = Vec::with_capacity(train.len());
    for item in train.items() {
        let trace = run_internal_alone(internal, item)?;
        let mut elapsed = 0.0;
        for (m, action) in trace.actions.iter().enumerate() {
            // Before action `m`, exactly `m` detectors have been queried.
            sums[m] += trace.elapsed - elapsed;
            counts[m] += 1;
            if let InternalAction::Query(j) = action {
                elapsed += item.reading(*j).runtime;
            }
        }
        totals.push(trace.elapsed);
    }
    totals.sort_by(f64::total_cmp);
    let mean_total = totals.iter().sum::<f64>() / totals.len() as f64;
    let remaining_by_queries = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(SeptModel {
        totals,
        mean_total,
        remaining_by_queries,
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Detector whose confidence correlates best (in absolute value) with the
/// labels on the training split. Ties go to the lowest id.
pub fn choose_cbpt_detector(train: &Corpus) -> Result<usize> {
    let labels: Vec<f64> = train.items().iter().map(|i| i.label.indicator()).collect();
    if !labels.iter().any(|&l| l == 1.0) || !labels.iter().any(|&l| l == 0.0) {
        return Err(Error::config("CBPT needs both labels in the training split"));
    }
    let mut best: Option<(usize, f64)> = None;
    for j in 0..train.n_detectors() {
        let conf: Vec<f64> = train.items().iter().map(|i| i.reading(j).confidence).collect();
        if let Some(r) = pearson(&conf, &labels) {
            if best.is_none_or(|(_, b)| r.abs() > b) {
                best = Some((j, r.abs()));
            }
        }
    }
    best.map(|(j, _)| j)
        .ok_or_else(|| Error::config("every detector has constant confidence on the training split"))
}

/// Runtime thresholds splitting MLFQ's three levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlfqThresholds {
    pub t1: f64,
    pub t2: f64,
}

impl MlfqThresholds {
    /// 33rd and 66th percentiles of every detector runtime in `train`.
    pub fn from_corpus(train: &Corpus) -> Result<Self> {
        let mut runtimes: Vec<f64> = train
            .items()
            .iter()
            .flat_map(|i| i.readings().iter().map(|r| r.runtime))
            .collect();
        if runtimes.is_empty() {
            return Err(Error::config("training split is empty"));
        }
        runtimes.sort_by(f64::total_cmp);
        let pick = |q: f64| runtimes[((runtimes.len() - 1) as f64 * q).round() as usize];
        Ok(MlfqThresholds {
            t1: pick(0.33),
            t2: pick(0.66),
        })
    }

    pub fn level(&self, runtime: f64) -> usize {
        if runtime <= self.t1 {
            0
        } else if runtime <= self.t2 {
            1
        } else {
            2
        }
    }
}

/// Side information the non-trivial baselines need, built from the training
/// split and stored next to the checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxModels {
    pub sept: SeptModel,
    pub cbpt_detector: usize,
    pub mlfq: MlfqThresholds,
}

impl AuxModels {
    pub fn build(train: &Corpus, internal: &PolicyNet) -> Result<Self> {
        Ok(AuxModels {
            sept: build_sept_model(train, internal)?,
            cbpt_detector: choose_cbpt_detector(train)?,
            mlfq: MlfqThresholds::from_corpus(train)?,
        })
    }
}

/// Picks the unfinished slot with the smallest key and sticks with it until
/// it is classified. Ties go to the lowest slot index.
struct RunToCompletion<F> {
    kind: SchedulerKind,
    key: F,
    current: Option<usize>,
}

impl<F> Scheduler for RunToCompletion<F>
where
    F: FnMut(&QueueState, usize) -> Result<f64>,
{
    fn kind(&self) -> SchedulerKind {
        self.kind
    }

    fn next_item(&mut self, qs: &QueueState) -> Result<usize> {
        require_unfinished(qs)?;
        if let Some(cur) = self.current {
            if qs.slot(cur).is_some_and(|s| s.is_unfinished()) {
                return Ok(cur);
            }
        }
        // An item already under way (e.g. handed over mid-analysis) is
        // finished before anything new starts.
        let slots = qs.unfinished_slots();
        let started: Vec<usize> = slots
            .iter()
            .copied()
            .filter(|&i| qs.slots()[i].internal_state().queried_count() > 0)
            .collect();
        let pool = if started.is_empty() { slots } else { started };
        let mut best: Option<(usize, f64)> = None;
        for i in pool {
            let key = (self.key)(qs, i)?;
            if best.is_none_or(|(_, b)| key < b) {
                best = Some((i, key));
            }
        }
        let pick = best.expect("at least one unfinished slot").0;
        self.current = Some(pick);
        Ok(pick)
    }
}

fn item_at(qs: &QueueState, slot: usize) -> &FileItem {
    qs.slots()[slot].item().expect("unfinished slots are live")
}

/// Three-level feedback queue keyed by the runtime of each item's next
/// action. Served items go to the back of their (possibly new) level.
pub struct Mlfq<'a> {
    internal: &'a PolicyNet,
    thresholds: MlfqThresholds,
    levels: [VecDeque<usize>; 3],
    member: HashMap<usize, usize>,
    last: Option<usize>,
}

impl<'a> Mlfq<'a> {
    pub fn new(internal: &'a PolicyNet, thresholds: MlfqThresholds) -> Self {
        Mlfq {
            internal,
            thresholds,
            levels: Default::default(),
            member: HashMap::new(),
            last: None,
        }
    }

    /// Items currently held at each level.
    pub fn level_counts(&self) -> [usize; 3] {
        [self.levels[0].len(), self.levels[1].len(), self.levels[2].len()]
    }

    fn next_runtime(&self, qs: &QueueState, slot: usize) -> Result<f64> {
        let state = qs.slots()[slot].internal_state();
        Ok(match internal_greedy_action(self.internal, state)? {
            InternalAction::Query(j) => item_at(qs, slot).reading(j).runtime,
            _ => 0.0,
        })
    }

    fn remove(&mut self, slot: usize) {
        if let Some(level) = self.member.remove(&slot) {
            self.levels[level].retain(|&s| s != slot);
        }
    }

    /// Brings the level structure in line with the queue.
    pub fn sync(&mut self, qs: &QueueState) -> Result<()> {
        let tracked: Vec<usize> = self.member.keys().copied().collect();
        for slot in tracked {
            if !qs.slot(slot).is_some_and(|s| s.is_unfinished()) {
                self.remove(slot);
            }
        }
        if let Some(last) = self.last.take() {
            if self.member.contains_key(&last) {
                self.remove(last);
                let level = self.thresholds.level(self.next_runtime(qs, last)?);
                self.levels[level].push_back(last);
                self.member.insert(last, level);
            }
        }
        for slot in qs.unfinished_slots() {
            if !self.member.contains_key(&slot) {
                let level = self.thresholds.level(self.next_runtime(qs, slot)?);
                self.levels[level].push_back(slot);
                self.member.insert(slot, level);
            }
        }
        Ok(())
    }
}

impl Scheduler for Mlfq<'_> {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Mlfq
    }

    fn next_item(&mut self, qs: &QueueState) -> Result<usize> {
        require_unfinished(qs)?;
        self.sync(qs)?;
        let pick = self
            .levels
            .iter()
            .find_map(|l| l.front().copied())
            .expect("unfinished items are queued");
        self.last = Some(pick);
        Ok(pick)
    }
}

/// The learned outer policy, extended to any queue length by tournament
/// reduction.
pub struct Merlin<'a> {
    outer: &'a PolicyNet,
    window: usize,
    last_trace: Option<ReductionTrace>,
}

impl<'a> Merlin<'a> {
    pub fn new(outer: &'a PolicyNet) -> Self {
        Merlin {
            outer,
            window: outer.action_dim(),
            last_trace: None,
        }
    }

    pub fn last_trace(&self) -> Option<&ReductionTrace> {
        self.last_trace.as_ref()
    }
}

impl Scheduler for Merlin<'_> {
    fn kind(&self) -> SchedulerKind {
        SchedulerKind::Merlin
    }

    fn next_item(&mut self, qs: &QueueState) -> Result<usize> {
        require_unfinished(qs)?;
        let (pick, trace) = hierarchical_select(self.outer, qs, &candidates(qs), self.window)?;
        self.last_trace = Some(trace);
        Ok(pick)
    }
}

/// Everything a scheduler may draw on. Schedulers only take what their
/// [`Information`] class allows.
#[derive(Debug, Clone, Copy)]
pub struct SchedulerContext<'a> {
    pub internal: &'a PolicyNet,
    pub outer: Option<&'a PolicyNet>,
    pub aux: Option<&'a AuxModels>,
}

pub fn make_scheduler<'a>(kind: SchedulerKind, ctx: SchedulerContext<'a>) -> Result<Box<dyn Scheduler + 'a>> {
    let aux = || {
        ctx.aux
            .ok_or_else(|| Error::usage(format!("{kind} needs auxiliary models built from the training split")))
    };
    let internal = ctx.internal;
    Ok(match kind {
        SchedulerKind::Fcfs => run_to_completion(kind, |_, i| Ok(i as f64)),
        SchedulerKind::Sff => run_to_completion(kind, |qs, i| Ok(item_at(qs, i).size_bytes as f64)),
        SchedulerKind::Lff => run_to_completion(kind, |qs, i| Ok(-(item_at(qs, i).size_bytes as f64))),
        SchedulerKind::Sept => {
            let model = aux()?.sept.clone();
            run_to_completion(kind, move |qs, i| {
                Ok(model.expected_remaining(qs.slots()[i].internal_state().queried_count()))
            })
        }
        SchedulerKind::Cbpt => {
            let j = aux()?.cbpt_detector;
            run_to_completion(kind, move |qs, i| Ok(item_at(qs, i).reading(j).confidence))
        }
        SchedulerKind::Spt | SchedulerKind::Lpt => {
            let sign = if kind == SchedulerKind::Spt { 1.0 } else { -1.0 };
            let mut cache: HashMap<u64, f64> = HashMap::new();
            run_to_completion(kind, move |qs, i| {
                let item = item_at(qs, i);
                let total = match cache.get(&item.id) {
                    Some(&t) => t,
                    None => {
                        let t = run_internal_alone(internal, item)?.elapsed;
                        cache.insert(item.id, t);
                        t
                    }
                };
                Ok(sign * total)
            })
        }
        SchedulerKind::Mlfq => Box::new(Mlfq::new(internal, aux()?.mlfq)),
        SchedulerKind::Merlin => {
            let outer = ctx
                .outer
                .ok_or_else(|| Error::usage("MERLIN needs a trained outer checkpoint"))?;
            Box::new(Merlin::new(outer))
        }
    })
}

fn run_to_completion<'a, F>(kind: SchedulerKind, key: F) -> Box<dyn Scheduler + 'a>
where
    F: FnMut(&QueueState, usize) -> Result<f64> + 'a,
{
    Box::new(RunToCompletion {
        kind,
        key,
        current: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusConfig, DetectorProfile, Label, Reading};
    use crate::internal::action_count;
    use crate::outer::{outer_reset, outer_step, DEFAULT_OUTER_PENALTY};

    fn item(id: u64, size: u64, runtimes: &[f64], conf: f64) -> FileItem {
        let readings = runtimes
            .iter()
            .map(|&runtime| Reading {
                confidence: conf,
                runtime,
            })
            .collect();
        FileItem::new(id, Label::Negative, size, readings).unwrap()
    }

    /// Internal policy over `k` detectors that always queries detector 0
    /// first and then classifies negative.
    fn query_then_classify(k: usize) -> PolicyNet {
        let mut net = PolicyNet::zeros(k, 1, action_count(k));
        let p = net.params_mut();
        // Layout: w1 (k x 1), b1 (1), wp (1 x (k+2)), bp (k+2), wv, bv.
        let hidden = 1;
        let bp = k * hidden + hidden + hidden * (k + 2);
        p[bp] = 2.0;
        p[bp + k] = 1.0;
        net
    }

    fn order(kind: SchedulerKind, items: &[FileItem], ctx: SchedulerContext) -> Vec<usize> {
        let mut sched = make_scheduler(kind, ctx).unwrap();
        let mut qs = outer_reset(items, items.len()).unwrap();
        let mut finished = Vec::new();
        while qs.unfinished_count() > 0 {
            let slot = sched.next_item(&qs).unwrap();
            let step = outer_step(&mut qs, slot, ctx.internal, DEFAULT_OUTER_PENALTY).unwrap();
            if step.completion.is_some() {
                finished.push(slot);
            }
        }
        assert!(sched.next_item(&qs).is_err());
        finished
    }

    fn ctx(internal: &PolicyNet) -> SchedulerContext<'_> {
        SchedulerContext {
            internal,
            outer: None,
            aux: None,
        }
    }

    #[test]
    fn names_round_trip() {
        for kind in SchedulerKind::ALL {
            assert_eq!(SchedulerKind::from_name(&kind.name().to_lowercase()).unwrap(), kind);
        }
        let err = SchedulerKind::from_name("RR").unwrap_err().to_string();
        assert!(err.contains("FCFS") && err.contains("MERLIN"), "{err}");
        assert_eq!(parse_scheduler_list("all").unwrap().len(), 9);
        assert_eq!(
            parse_scheduler_list("spt,FCFS,spt").unwrap(),
            vec![SchedulerKind::Spt, SchedulerKind::Fcfs]
        );
    }

    #[test]
    fn information_groups() {
        let realistic: Vec<_> = SchedulerKind::ALL.into_iter().filter(|k| k.is_realistic()).collect();
        assert_eq!(
            realistic,
            vec![
                SchedulerKind::Fcfs,
                SchedulerKind::Sff,
                SchedulerKind::Lff,
                SchedulerKind::Mlfq,
                SchedulerKind::Merlin
            ]
        );
        assert_eq!(SchedulerKind::Spt.information(), Information::OracleTotals);
    }

    #[test]
    fn fcfs_sticks_with_slot_zero() {
        let net = query_then_classify(2);
        let items = [item(0, 1, &[1.0, 1.0], 0.2), item(1, 1, &[1.0, 1.0], 0.2)];
        let mut sched = make_scheduler(SchedulerKind::Fcfs, ctx(&net)).unwrap();
        let mut qs = outer_reset(&items, 2).unwrap();
        assert_eq!(sched.next_item(&qs).unwrap(), 0);
        outer_step(&mut qs, 0, &net, DEFAULT_OUTER_PENALTY).unwrap();
        assert!(!qs.slots()[0].is_done());
        assert_eq!(sched.next_item(&qs).unwrap(), 0);
    }

    #[test]
    fn size_orders() {
        let net = query_then_classify(1);
        let items = [item(0, 300, &[1.0], 0.2), item(1, 100, &[1.0], 0.2), item(2, 200, &[1.0], 0.2)];
        assert_eq!(order(SchedulerKind::Sff, &items, ctx(&net)), vec![1, 2, 0]);
        assert_eq!(order(SchedulerKind::Lff, &items, ctx(&net)), vec![0, 2, 1]);
    }

    #[test]
    fn oracle_orders() {
        let net = query_then_classify(1);
        let items = [item(0, 1, &[5.0], 0.2), item(1, 1, &[2.0], 0.2), item(2, 1, &[9.0], 0.2)];
        assert_eq!(order(SchedulerKind::Spt, &items, ctx(&net)), vec![1, 0, 2]);
        assert_eq!(order(SchedulerKind::Lpt, &items, ctx(&net)), vec![2, 0, 1]);
        let totals = oracle_totals(&items, &net).unwrap();
        assert_eq!(totals.values().copied().collect::<Vec<_>>(), vec![5.0, 2.0, 9.0]);
    }

    fn corpus_from(items: Vec<FileItem>) -> Corpus {
        let k = items[0].n_detectors();
        let mut config = CorpusConfig::new(items.len(), k);
        config.detectors = (0..k)
            .map(|id| DetectorProfile {
                id,
                mean_runtime: 1.0,
                runtime_sd: 0.0,
                discrimination: 0.5,
                noise_sd: 0.1,
                hardness_sensitivity: 1.0,
            })
            .collect();
        Corpus::from_parts(config.detectors.clone(), items, 0, config).unwrap()
    }

    #[test]
    fn sept_degenerate_totals() {
        let net = query_then_classify(2);
        let items: Vec<FileItem> = (0..4).map(|i| item(i, 1, &[4.0, 1.0], 0.3)).collect();
        let model = build_sept_model(&corpus_from(items.clone()), &net).unwrap();
        assert_eq!(model.expected_remaining(0), 4.0);
        assert_eq!(model.expected_remaining(1), 0.0);
        // Nobody reaches two queries: falls back to the mean.
        assert_eq!(model.expected_remaining(2), 4.0);
        assert_eq!(model, build_sept_model(&corpus_from(items), &net).unwrap());
    }

    #[test]
    fn pearson_identity_and_cbpt_choice() {
        assert_eq!(pearson(&[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0, 1.0, 1.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);

        let mut items = Vec::new();
        for i in 0..6u64 {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            let perfect = label.indicator();
            let readings = vec![
                Reading { confidence: 0.5, runtime: 1.0 },
                Reading { confidence: perfect, runtime: 1.0 },
                Reading { confidence: perfect, runtime: 1.0 },
            ];
            items.push(FileItem::new(i, label, 1, readings).unwrap());
        }
        assert_eq!(choose_cbpt_detector(&corpus_from(items.clone())).unwrap(), 1);

        let flat: Vec<FileItem> = items
            .iter()
            .map(|it| {
                let r = vec![Reading { confidence: 0.5, runtime: 1.0 }; 3];
                FileItem::new(it.id, it.label, 1, r).unwrap()
            })
            .collect();
        assert!(matches!(choose_cbpt_detector(&corpus_from(flat)), Err(Error::Config(_))));
    }

    #[test]
    fn mlfq_prefers_cheap_next_actions() {
        let net = query_then_classify(1);
        let thresholds = MlfqThresholds { t1: 1.0, t2: 5.0 };
        let items = [item(0, 1, &[9.0], 0.2), item(1, 1, &[0.5], 0.2), item(2, 1, &[3.0], 0.2)];
        let mut mlfq = Mlfq::new(&net, thresholds);
        let mut qs = outer_reset(&items, 3).unwrap();
        let mut served = Vec::new();
        while qs.unfinished_count() > 0 {
            let slot = mlfq.next_item(&qs).unwrap();
            let total: usize = mlfq.level_counts().iter().sum();
            assert_eq!(total, qs.unfinished_count());
            served.push(slot);
            outer_step(&mut qs, slot, &net, DEFAULT_OUTER_PENALTY).unwrap();
        }
        // Item 1 is queried and then its (free) classification jumps ahead.
        assert_eq!(served, vec![1, 1, 2, 2, 0, 0]);
    }

    #[test]
    fn aux_models_round_trip() {
        let corpus = generate_corpus(&CorpusConfig::new(60, 3), 9).unwrap();
        let net = query_then_classify(3);
        let aux = AuxModels::build(&corpus, &net).unwrap();
        assert!(aux.mlfq.t1 <= aux.mlfq.t2);
        let back: AuxModels = serde_json::from_str(&serde_json::to_string(&aux).unwrap()).unwrap();
        assert_eq!(back, aux);
    }

    #[test]
    fn missing_requirements() {
        let net = query_then_classify(1);
        assert!(make_scheduler(SchedulerKind::Merlin, ctx(&net)).is_err());
        assert!(make_scheduler(SchedulerKind::Sept, ctx(&net)).is_err());
        assert!(make_scheduler(SchedulerKind::Fcfs, ctx(&net)).is_ok());
    }
}
