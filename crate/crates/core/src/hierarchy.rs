//! Tournament reduction that lets a window-`n` outer policy schedule a queue
//! of any length.
//!
//! Candidates are cut into consecutive groups of `n`, the last one padded with
//! done-flagged rows. The outer policy picks one slot per group; the winners
//! are grouped again until a single group remains, whose pick is the answer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outer::{encode_outer_state, QueueState};
use crate::rl::PolicyNet;

/// Exactly `n` entries; `None` is a pad. Pads only occupy trailing positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQueueView {
    pub slots: Vec<Option<usize>>,
}

impl SubQueueView {
    pub fn pad_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionLevel {
    pub candidates: usize,
    pub sub_queues: usize,
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionTrace {
    pub levels: Vec<ReductionLevel>,
    pub selected: usize,
}

impl ReductionTrace {
    /// Candidate count entering each level, followed by the final 1.
    pub fn level_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.levels.iter().map(|l| l.candidates).collect();
        sizes.push(1);
        sizes
    }
}

pub fn partition(active: &[usize], n: usize) -> Result<Vec<SubQueueView>> {
    if n == 0 {
        return Err(Error::usage("window size must be at least 1"));
    }
    if active.is_empty() {
        return Err(Error::usage("nothing to partition"));
    }
    Ok(active
        .chunks(n)
        .map(|chunk| {
            let mut slots: Vec<Option<usize>> = chunk.iter().copied().map(Some).collect();
            slots.resize(n, None);
            SubQueueView { slots }
        })
        .collect())
}

fn check_dims(outer: &PolicyNet, qs: &QueueState, n: usize) -> Result<()> {
    let want = n * (qs.n_detectors() + 1);
    if outer.input_dim() != want || outer.action_dim() != n {
        return Err(Error::usage(format!(
            "outer network is {}x{}, a window of {n} needs {want}x{n}",
            outer.input_dim(),
            outer.action_dim()
        )));
    }
    Ok(())
}

/// Masked greedy pick of the outer policy over one view.
pub fn select_per_subqueue(outer: &PolicyNet, qs: &QueueState, view: &SubQueueView) -> Result<usize> {
    let n = view.slots.len();
    check_dims(outer, qs, n)?;
    let mut x = Vec::with_capacity(outer.input_dim());
    let mut mask = Vec::with_capacity(n);
    for entry in &view.slots {
        match entry {
            Some(id) => {
                let slot = qs
                    .slot(*id)
                    .ok_or_else(|| Error::usage(format!("slot {id} does not exist")))?;
                qs.slot_row(*id, &mut x);
                mask.push(slot.is_unfinished());
            }
            None => {
                qs.pad_row(&mut x);
                mask.push(false);
            }
        }
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::usage("sub-queue has no unfinished slot"));
    }
    let a = outer.greedy(&x, Some(&mask))?;
    Ok(view.slots[a].expect("masked pick is a real slot"))
}

/// Pick over a queue of at most `n` slots, encoded in place with pads after.
pub fn direct_select(outer: &PolicyNet, qs: &QueueState) -> Result<usize> {
    check_dims(outer, qs, qs.window())?;
    let x = encode_outer_state(qs)?;
    let mut mask = qs.legal_mask();
    mask.resize(qs.window(), false);
    if !mask.iter().any(|&m| m) {
        return Err(Error::usage("queue has no unfinished slot"));
    }
    outer.greedy(&x, Some(&mask))
}

/// The candidate list the reduction runs over.
///
/// While all live slots fit in one window they are kept in place, finished
/// ones included, so the policy sees the same matrix as in training. Larger
/// queues drop finished slots.
pub fn candidates(qs: &QueueState) -> Vec<usize> {
    if qs.live_count() <= qs.window() {
        qs.live_slots()
    } else {
        qs.unfinished_slots()
    }
}

pub fn hierarchical_select(
    outer: &PolicyNet,
    qs: &QueueState,
    active: &[usize],
    n: usize,
) -> Result<(usize, ReductionTrace)> {
    if active.is_empty() {
        return Err(Error::usage("no active slots to select from"));
    }
    let mut levels = Vec::new();
    let mut current = active.to_vec();
    loop {
        let views = partition(&current, n)?;
        let selected = views
            .iter()
            .map(|v| select_per_subqueue(outer, qs, v))
            .collect::<Result<Vec<_>>>()?;
        let done = views.len() == 1 || n == 1;
        levels.push(ReductionLevel {
            candidates: current.len(),
            sub_queues: views.len(),
            selected: selected.clone(),
        });
        if done {
            // With n == 1 every view is a singleton and nothing shrinks; the
            // first winner in slot order is taken.
            let pick = selected[0];
            return Ok((pick, ReductionTrace { levels, selected: pick }));
        }
        current = selected;
    }
}
