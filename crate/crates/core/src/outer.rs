//! Queue-scheduling environment.
//!
//! The outer agent picks one slot; the frozen internal policy then advances
//! that item by exactly one action. A single server executes one action at a
//! time: the global clock moves by the action's runtime and every other
//! unfinished item accrues the same amount of waiting time.

use serde::{Deserialize, Serialize};

use crate::corpus::{FileItem, Label};
use crate::error::{Error, Result};
use crate::internal::{
    apply_action, encode_internal, internal_reset, legal_actions, InternalAction, InternalState,
    UNQUERIED,
};
use crate::rl::{Environment, PolicyNet};

/// Reward for selecting a finished or padded slot.
pub const DEFAULT_OUTER_PENALTY: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QueueSlot {
    item: Option<FileItem>,
    internal: InternalState,
    waiting_seconds: f64,
    arrival_time: f64,
}

impl QueueSlot {
    fn live(item: FileItem, arrival_time: f64, waiting_seconds: f64) -> Self {
        QueueSlot {
            internal: internal_reset(&item),
            item: Some(item),
            waiting_seconds,
            arrival_time,
        }
    }

    fn pad(k: usize) -> Self {
        QueueSlot {
            item: None,
            internal: InternalState::unqueried(k),
            waiting_seconds: 0.0,
            arrival_time: 0.0,
        }
    }

    pub fn item(&self) -> Option<&FileItem> {
        self.item.as_ref()
    }

    pub fn is_pad(&self) -> bool {
        self.item.is_none()
    }

    /// The done flag `d`: set for finished items and for every pad.
    pub fn is_done(&self) -> bool {
        self.is_pad() || self.internal.is_terminal()
    }

    pub fn is_unfinished(&self) -> bool {
        !self.is_done()
    }

    pub fn internal_state(&self) -> &InternalState {
        &self.internal
    }

    pub fn waiting_seconds(&self) -> f64 {
        self.waiting_seconds
    }

    pub fn processing_seconds(&self) -> f64 {
        self.internal.elapsed_seconds()
    }

    pub fn arrival_time(&self) -> f64 {
        self.arrival_time
    }
}

/// Per-item outcome: `completion = processing + waiting`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub slot: usize,
    pub item_id: u64,
    pub processing: f64,
    pub waiting: f64,
    pub completion: f64,
    pub arrival_time: f64,
    pub finished_at: f64,
    pub verdict: Label,
    pub label: Label,
}

/// One executed internal action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceEvent {
    pub slot: usize,
    pub item_id: u64,
    pub start: f64,
    pub runtime: f64,
    pub action: InternalAction,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    slots: Vec<QueueSlot>,
    clock: f64,
    busy_seconds: f64,
    window: usize,
    k: usize,
    events: Vec<ServiceEvent>,
}

/// Outcome of one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterStep {
    pub reward: f64,
    pub illegal: bool,
    pub runtime: f64,
    pub action: Option<InternalAction>,
    pub completion: Option<CompletionRecord>,
}

/// Fresh static queue for a window of `n` slots; fewer items are padded with
/// done-flagged slots.
pub fn outer_reset(items: &[FileItem], n: usize) -> Result<QueueState> {
    if items.is_empty() {
        return Err(Error::usage("cannot schedule an empty queue"));
    }
    if items.len() > n {
        return Err(Error::usage(format!(
            "{} items do not fit a window of {n}; use the hierarchical scheduler",
            items.len()
        )));
    }
    let mut qs = QueueState::open(items, n)?;
    let k = qs.k;
    qs.slots.resize_with(n, || QueueSlot::pad(k));
    Ok(qs)
}

impl QueueState {
    /// Unpadded queue of any length; used for large and dynamic queues.
    pub fn open(items: &[FileItem], window: usize) -> Result<Self> {
        let k = items
            .first()
            .map(FileItem::n_detectors)
            .ok_or_else(|| Error::usage("cannot infer detector count from an empty queue"))?;
        let mut qs = QueueState::empty(window, k)?;
        for item in items {
            qs.push_arrival(item.clone(), 0.0)?;
        }
        Ok(qs)
    }

    pub fn empty(window: usize, k: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::usage("window size must be at least 1"));
        }
        if k == 0 {
            return Err(Error::usage("items need at least one detector"));
        }
        Ok(QueueState {
            slots: Vec::new(),
            clock: 0.0,
            busy_seconds: 0.0,
            window,
            k,
            events: Vec::new(),
        })
    }

    /// Adds a live item that arrived at `arrival_time` (at or before the
    /// current clock). The time it already spent waiting is credited.
    pub fn push_arrival(&mut self, item: FileItem, arrival_time: f64) -> Result<usize> {
        if item.n_detectors() != self.k {
            return Err(Error::usage(format!(
                "item {} has {} detectors, queue expects {}",
                item.id,
                item.n_detectors(),
                self.k
            )));
        }
        if arrival_time > self.clock {
            return Err(Error::usage("arrival lies in the future"));
        }
        let waited = self.clock - arrival_time;
        self.slots.push(QueueSlot::live(item, arrival_time, waited));
        Ok(self.slots.len() - 1)
    }

    /// Idles the server until `time`. Only valid while nothing is unfinished.
    pub fn advance_idle(&mut self, time: f64) -> Result<()> {
        if self.unfinished_count() > 0 {
            return Err(Error::usage("server cannot idle while work is pending"));
        }
        if time > self.clock {
            self.clock = time;
        }
        Ok(())
    }

    pub fn slots(&self) -> &[QueueSlot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> Option<&QueueSlot> {
        self.slots.get(index)
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Total seconds the server spent executing actions.
    pub fn busy_seconds(&self) -> f64 {
        self.busy_seconds
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_detectors(&self) -> usize {
        self.k
    }

    pub fn events(&self) -> &[ServiceEvent] {
        &self.events
    }

    pub fn live_count(&self) -> usize {
        self.slots.iter().filter(|s| !s.is_pad()).count()
    }

    pub fn unfinished_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_unfinished()).count()
    }

    /// Indices of unfinished live slots, in slot order.
    pub fn unfinished_slots(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| self.slots[i].is_unfinished())
            .collect()
    }

    /// Indices of live (non-pad) slots, in slot order.
    pub fn live_slots(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&i| !self.slots[i].is_pad())
            .collect()
    }

    /// Selection mask over physical slots.
    pub fn legal_mask(&self) -> Vec<bool> {
        self.slots.iter().map(QueueSlot::is_unfinished).collect()
    }

    /// Row of the state matrix: `k` detector values followed by `d`.
    pub fn slot_row(&self, index: usize, out: &mut Vec<f64>) {
        let slot = &self.slots[index];
        out.extend_from_slice(slot.internal.outputs());
        out.push(if slot.is_done() { 1.0 } else { 0.0 });
    }

    /// Row of a synthetic pad.
    pub fn pad_row(&self, out: &mut Vec<f64>) {
        out.extend(std::iter::repeat(UNQUERIED).take(self.k));
        out.push(1.0);
    }
}

/// Flat `n * (k + 1)` encoding of a queue holding at most `n` slots. Missing
/// rows are encoded as pads.
pub fn encode_outer_state(qs: &QueueState) -> Result<Vec<f64>> {
    if qs.slots.len() > qs.window {
        return Err(Error::usage(format!(
            "queue holds {} slots, window is {}",
            qs.slots.len(),
            qs.window
        )));
    }
    let mut out = Vec::with_capacity(qs.window * (qs.k + 1));
    for i in 0..qs.slots.len() {
        qs.slot_row(i, &mut out);
    }
    for _ in qs.slots.len()..qs.window {
        qs.pad_row(&mut out);
    }
    Ok(out)
}

/// True when every live slot is done (vacuously true with no live slots).
pub fn is_complete(qs: &QueueState) -> bool {
    qs.slots.iter().all(QueueSlot::is_done)
}

/// The frozen internal policy's greedy choice for `state`.
pub fn internal_greedy_action(internal: &PolicyNet, state: &InternalState) -> Result<InternalAction> {
    let mask = legal_actions(state);
    let idx = internal.greedy(&encode_internal(state), Some(&mask))?;
    InternalAction::from_index(idx, state.n_detectors())
}

/// Advance `slot` by one greedy internal action.
///
/// Selecting a pad, a finished slot or an out-of-range index costs `penalty`
/// and changes nothing else. Otherwise the reward is `-runtime * U`, with `U`
/// the number of unfinished items before the step; summed over an episode it
/// equals minus the total completion time.
pub fn outer_step(
    qs: &mut QueueState,
    slot: usize,
    internal: &PolicyNet,
    penalty: f64,
) -> Result<OuterStep> {
    let selectable = qs.slots.get(slot).is_some_and(QueueSlot::is_unfinished);
    if !selectable {
        return Ok(OuterStep {
            reward: penalty,
            illegal: true,
            runtime: 0.0,
            action: None,
            completion: None,
        });
    }
    let unfinished = qs.unfinished_count();
    let action = internal_greedy_action(internal, &qs.slots[slot].internal)?;
    let item = qs.slots[slot].item.as_ref().expect("selectable slot is live");
    let (next, runtime, illegal) = apply_action(&qs.slots[slot].internal, action, item)?;
    debug_assert!(!illegal, "masked greedy action cannot be illegal");
    let item_id = item.id;
    let label = item.label;

    let start = qs.clock;
    qs.slots[slot].internal = next;
    qs.clock += runtime;
    qs.busy_seconds += runtime;
    for (i, other) in qs.slots.iter_mut().enumerate() {
        if i != slot && other.is_unfinished() {
            other.waiting_seconds += runtime;
        }
    }

    let s = &qs.slots[slot];
    let completion = s.internal.verdict().map(|verdict| CompletionRecord {
        slot,
        item_id,
        processing: s.processing_seconds(),
        waiting: s.waiting_seconds,
        completion: s.processing_seconds() + s.waiting_seconds,
        arrival_time: s.arrival_time,
        finished_at: qs.clock,
        verdict,
        label,
    });
    qs.events.push(ServiceEvent {
        slot,
        item_id,
        start,
        runtime,
        action,
        completed: completion.is_some(),
    });
    Ok(OuterStep {
        reward: -runtime * unfinished as f64,
        illegal: false,
        runtime,
        action: Some(action),
        completion,
    })
}

/// Training environment for the outer agent over a fixed window.
pub struct OuterEnv<'a> {
    pub state: QueueState,
    internal: &'a PolicyNet,
    penalty: f64,
    pub completions: Vec<CompletionRecord>,
}

impl<'a> OuterEnv<'a> {
    pub fn new(items: &[FileItem], n: usize, internal: &'a PolicyNet, penalty: f64) -> Result<Self> {
        Ok(OuterEnv {
            state: outer_reset(items, n)?,
            internal,
            penalty,
            completions: Vec::new(),
        })
    }
}

impl Environment for OuterEnv<'_> {
    fn observation(&self) -> Vec<f64> {
        encode_outer_state(&self.state).expect("window-sized queue")
    }

    fn action_mask(&self) -> Vec<bool> {
        self.state.legal_mask()
    }

    fn step(&mut self, action: usize) -> Result<(f64, bool)> {
        let step = outer_step(&mut self.state, action, self.internal, self.penalty)?;
        if let Some(rec) = step.completion {
            self.completions.push(rec);
        }
        Ok((step.reward, is_complete(&self.state)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Reading;

    fn item(id: u64, runtimes: &[f64]) -> FileItem {
        let readings = runtimes
            .iter()
            .map(|&r| Reading {
                confidence: 0.7,
                runtime: r,
            })
            .collect();
        FileItem::new(id, Label::Positive, 10, readings).unwrap()
    }

    /// Internal policy that always queries detector 0 first, then classifies
    /// positive: logits favour action 0, then action k+1.
    fn query_then_classify(k: usize) -> PolicyNet {
        let na = k + 2;
        let mut net = PolicyNet::zeros(k, 1, na);
        // hidden unit = relu(1) via bias; query-0 logit 2, classify-positive logit 1.
        let p = net.params_mut();
        let b1 = k;
        p[b1] = 1.0;
        let wp = b1 + 1;
        p[wp] = 2.0;
        p[wp + k + 1] = 1.0;
        net
    }

    #[test]
    fn reset_and_padding() {
        let items: Vec<_> = (0..7).map(|i| item(i, &[1.0, 2.0])).collect();
        let qs = outer_reset(&items, 10).unwrap();
        assert_eq!(qs.slots().len(), 10);
        assert_eq!(qs.live_count(), 7);
        assert_eq!(qs.slots().iter().filter(|s| s.is_pad() && s.is_done()).count(), 3);
        assert_eq!(qs.clock(), 0.0);
        assert!(outer_reset(&[], 10).is_err());

        let ten: Vec<_> = (0..10).map(|i| item(i, &[1.0; 5])).collect();
        let qs = outer_reset(&ten, 10).unwrap();
        assert!(qs.slots().iter().all(|s| !s.is_done()));
        assert_eq!(encode_outer_state(&qs).unwrap().len(), 60);
    }

    #[test]
    fn encoding() {
        let items = vec![item(0, &[1.0, 1.0]), item(1, &[1.0, 1.0])];
        let mut qs = outer_reset(&items, 2).unwrap();
        assert_eq!(encode_outer_state(&qs).unwrap(), vec![-1.0, -1.0, 0.0, -1.0, -1.0, 0.0]);
        outer_step(&mut qs, 0, &query_then_classify(2), -1.0).unwrap();
        assert_eq!(encode_outer_state(&qs).unwrap()[0], 0.7);

        let padded = outer_reset(&items[..1], 2).unwrap();
        assert_eq!(&encode_outer_state(&padded).unwrap()[3..], &[-1.0, -1.0, 1.0]);
    }

    #[test]
    fn done_slot_selection_is_penalised() {
        let items = vec![item(0, &[1.0])];
        let mut qs = outer_reset(&items, 3).unwrap();
        let before = qs.clone();
        let step = outer_step(&mut qs, 2, &query_then_classify(1), -1.0).unwrap();
        assert!(step.illegal);
        assert_eq!(step.reward, -1.0);
        assert_eq!(qs, before);
        let step = outer_step(&mut qs, 99, &query_then_classify(1), -1.0).unwrap();
        assert!(step.illegal);
    }

    #[test]
    fn single_item_has_no_waiting() {
        let net = query_then_classify(1);
        let mut qs = outer_reset(&[item(0, &[3.0])], 1).unwrap();
        outer_step(&mut qs, 0, &net, -1.0).unwrap();
        let last = outer_step(&mut qs, 0, &net, -1.0).unwrap();
        let rec = last.completion.unwrap();
        assert_eq!(rec.waiting, 0.0);
        assert_eq!(rec.completion, rec.processing);
        assert_eq!(rec.processing, 3.0);
        assert!(is_complete(&qs));
    }

    #[test]
    fn sequential_two_items() {
        // A takes 2 s, B takes 4 s; A fully then B: C_A = 2, C_B = 6.
        let net = query_then_classify(1);
        let mut qs = outer_reset(&[item(0, &[2.0]), item(1, &[4.0])], 2).unwrap();
        let mut recs = Vec::new();
        let mut total_reward = 0.0;
        for slot in [0, 0, 1, 1] {
            let s = outer_step(&mut qs, slot, &net, -1.0).unwrap();
            total_reward += s.reward;
            recs.extend(s.completion);
        }
        assert_eq!(recs[0].completion, 2.0);
        assert_eq!(recs[1].completion, 6.0);
        assert_eq!(recs[1].waiting, 2.0);
        assert_eq!(total_reward, -8.0);
        assert_eq!(qs.clock(), 6.0);
    }

    #[test]
    fn completion_flags() {
        let items = vec![item(0, &[1.0])];
        let fresh = outer_reset(&items, 2).unwrap();
        assert!(!is_complete(&fresh));
        let empty = QueueState::empty(3, 2).unwrap();
        assert!(is_complete(&empty));
    }

    #[test]
    fn arrivals_credit_waiting() {
        let mut qs = QueueState::empty(2, 1).unwrap();
        qs.advance_idle(5.0).unwrap();
        let idx = qs.push_arrival(item(3, &[1.0]), 4.0).unwrap();
        assert_eq!(qs.slot(idx).unwrap().waiting_seconds(), 1.0);
        assert!(qs.push_arrival(item(4, &[1.0]), 6.0).is_err());
        assert!(qs.advance_idle(7.0).is_err());
    }
}
