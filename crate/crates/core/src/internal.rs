//! Single-item environment: query detectors one at a time, or stop and classify.
//!
//! Action indices `0..k` query detector `j`; `k` classifies the item as
//! negative and `k + 1` as positive. Queries yield reward 0; the whole time
//! cost is folded into the terminal reward through the cost function `C'(t)`.

use serde::{Deserialize, Serialize};

use crate::corpus::{FileItem, Label};
use crate::error::{Error, Result};

/// Observation value of a detector that has not been queried yet.
pub const UNQUERIED: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InternalAction {
    Query(usize),
    ClassifyNegative,
    ClassifyPositive,
}

impl InternalAction {
    pub fn from_index(index: usize, k: usize) -> Result<Self> {
        match index {
            j if j < k => Ok(InternalAction::Query(j)),
            j if j == k => Ok(InternalAction::ClassifyNegative),
            j if j == k + 1 => Ok(InternalAction::ClassifyPositive),
            _ => Err(Error::usage(format!(
                "action index {index} out of range for {k} detectors"
            ))),
        }
    }

    pub fn index(self, k: usize) -> usize {
        match self {
            InternalAction::Query(j) => j,
            InternalAction::ClassifyNegative => k,
            InternalAction::ClassifyPositive => k + 1,
        }
    }
}

/// Number of internal actions for `k` detectors.
pub fn action_count(k: usize) -> usize {
    k + 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalState {
    outputs: Vec<f64>,
    elapsed_seconds: f64,
    verdict: Option<Label>,
}

impl InternalState {
    /// Fresh state for `k` detectors: every output is the sentinel.
    pub fn unqueried(k: usize) -> Self {
        InternalState {
            outputs: vec![UNQUERIED; k],
            elapsed_seconds: 0.0,
            verdict: None,
        }
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn elapsed_seconds(&self) -> f64 {
        self.elapsed_seconds
    }

    pub fn is_terminal(&self) -> bool {
        self.verdict.is_some()
    }

    pub fn verdict(&self) -> Option<Label> {
        self.verdict
    }

    pub fn is_queried(&self, detector: usize) -> bool {
        self.outputs[detector] != UNQUERIED
    }

    pub fn queried_count(&self) -> usize {
        self.outputs.iter().filter(|&&v| v != UNQUERIED).count()
    }

    pub fn n_detectors(&self) -> usize {
        self.outputs.len()
    }
}

/// Time cost `C'(t)`; monotone non-decreasing with `C'(0) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostFunction {
    Linear { slope: f64 },
    Affine { slope: f64, intercept: f64 },
    /// Piecewise-linear through `(t, cost)` knots sorted by `t`, flat beyond the ends.
    Custom { knots: Vec<(f64, f64)> },
}

impl Default for CostFunction {
    fn default() -> Self {
        CostFunction::Linear { slope: 1.0 }
    }
}

impl CostFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            CostFunction::Linear { slope } => {
                if !(*slope >= 0.0 && slope.is_finite()) {
                    return Err(Error::config("linear cost slope must be >= 0"));
                }
            }
            CostFunction::Affine { slope, intercept } => {
                if !(*slope >= 0.0 && slope.is_finite() && *intercept >= 0.0) {
                    return Err(Error::config(
                        "affine cost needs slope >= 0 and intercept >= 0",
                    ));
                }
            }
            CostFunction::Custom { knots } => {
                if knots.is_empty() {
                    return Err(Error::config("custom cost needs at least one knot"));
                }
                if knots[0].1 < 0.0 || knots[0].0 < 0.0 {
                    return Err(Error::config("custom cost must start at t >= 0 with cost >= 0"));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return Err(Error::config(
                            "custom cost knots must be strictly increasing in t and non-decreasing in cost",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            CostFunction::Linear { slope } => slope * t,
            CostFunction::Affine { slope, intercept } => intercept + slope * t,
            CostFunction::Custom { knots } => {
                let first = knots[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let ((t0, c0), (t1, c1)) = (w[0], w[1]);
                    if t <= t1 {
                        return c0 + (c1 - c0) * (t - t0) / (t1 - t0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }
}

/// One cell of a reward table: a constant, or a multiple of `C'(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardTerm {
    Const(f64),
    Cost(f64),
}

impl RewardTerm {
    fn value(self, cost: &CostFunction, elapsed: f64) -> f64 {
        match self {
            RewardTerm::Const(v) => v,
            RewardTerm::Cost(m) => m * cost.eval(elapsed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSetup {
    pub name: String,
    pub tp: RewardTerm,
    pub tn: RewardTerm,
    pub fp: RewardTerm,
    #[serde(rename = "fn")]
    pub fn_: RewardTerm,
    pub cost: CostFunction,
    /// Reward for querying an already-queried detector (negative).
    pub illegal_penalty: f64,
}

/// Names accepted by [`RewardSetup::preset`].
pub const PRESET_NAMES: [&str; 5] = ["exp1", "exp2", "exp3", "exp4", "exp5"];

impl RewardSetup {
    /// The five reward tables, `exp1`..`exp5`, with the linear `C'(t) = t`.
    ///
    /// `exp1` and `exp2` reward correct verdicts with `+C'(t)`; they are kept
    /// for comparison and treated as experimental.
    pub fn preset(name: &str) -> Result<Self> {
        use RewardTerm::{Const, Cost};
        let (tp, tn, fp, fn_) = match name {
            "exp1" => (Cost(1.0), Cost(1.0), Cost(-1.0), Cost(-1.0)),
            "exp2" => (Cost(1.0), Cost(1.0), Cost(-10.0), Cost(-10.0)),
            "exp3" => (Const(1.0), Const(1.0), Cost(-1.0), Cost(-1.0)),
            "exp4" => (Const(10.0), Const(10.0), Cost(-1.0), Cost(-1.0)),
            "exp5" => (Const(100.0), Const(100.0), Cost(-1.0), Cost(-1.0)),
            other => {
                return Err(Error::config(format!(
                    "unknown reward preset `{other}`, expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Ok(RewardSetup {
            name: name.to_string(),
            tp,
            tn,
            fp,
            fn_,
            cost: CostFunction::default(),
            illegal_penalty: -1.0,
        })
    }

    pub fn with_cost(mut self, cost: CostFunction) -> Result<Self> {
        cost.validate()?;
        self.cost = cost;
        Ok(self)
    }

    /// Terminal reward for classifying an item of class `truth` as `verdict`
    /// after `elapsed` seconds.
    pub fn terminal_reward(&self, truth: Label, verdict: Label, elapsed: f64) -> f64 {
        let term = match (truth, verdict) {
            (Label::Positive, Label::Positive) => self.tp,
            (Label::Negative, Label::Negative) => self.tn,
            (Label::Negative, Label::Positive) => self.fp,
            (Label::Positive, Label::Negative) => self.fn_,
        };
        term.value(&self.cost, elapsed)
    }
}

pub fn internal_reset(item: &FileItem) -> InternalState {
    InternalState::unqueried(item.n_detectors())
}

/// Result of one internal step.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalStep {
    pub state: InternalState,
    pub reward: f64,
    pub done: bool,
    /// Simulated seconds consumed by the step.
    pub runtime: f64,
    /// True when the action was illegal and left the state unchanged.
    pub illegal: bool,
}

/// Applies `action` without computing a reward. Returns the next state, the
/// simulated seconds consumed and whether the action was illegal (in which case
/// the state is unchanged).
pub fn apply_action(
    state: &InternalState,
    action: InternalAction,
    item: &FileItem,
) -> Result<(InternalState, f64, bool)> {
    if state.is_terminal() {
        return Err(Error::usage("step on a terminal internal state"));
    }
    let k = state.n_detectors();
    if item.n_detectors() != k {
        return Err(Error::usage(format!(
            "state has {k} detectors but item {} has {}",
            item.id,
            item.n_detectors()
        )));
    }
    let mut next = state.clone();
    match action {
        InternalAction::Query(j) if j >= k => Err(Error::usage(format!(
            "detector {j} out of range for {k} detectors"
        ))),
        InternalAction::Query(j) if state.is_queried(j) => Ok((next, 0.0, true)),
        InternalAction::Query(j) => {
            let reading = item.reading(j);
            next.outputs[j] = reading.confidence;
            next.elapsed_seconds += reading.runtime;
            Ok((next, reading.runtime, false))
        }
        InternalAction::ClassifyNegative => {
            next.verdict = Some(Label::Negative);
            Ok((next, 0.0, false))
        }
        InternalAction::ClassifyPositive => {
            next.verdict = Some(Label::Positive);
            Ok((next, 0.0, false))
        }
    }
}

pub fn internal_step(
    state: &InternalState,
    action: InternalAction,
    item: &FileItem,
    setup: &RewardSetup,
) -> Result<InternalStep> {
    let (next, runtime, illegal) = apply_action(state, action, item)?;
    let done = next.is_terminal();
    let reward = if illegal {
        setup.illegal_penalty
    } else if let Some(verdict) = next.verdict {
        setup.terminal_reward(item.label, verdict, next.elapsed_seconds)
    } else {
        0.0
    };
    Ok(InternalStep {
        state: next,
        reward,
        done,
        runtime,
        illegal,
    })
}

/// Legal-action mask of length `k + 2`.
pub fn legal_actions(state: &InternalState) -> Vec<bool> {
    let k = state.n_detectors();
    if state.is_terminal() {
        return vec![false; action_count(k)];
    }
    let mut mask: Vec<bool> = state.outputs.iter().map(|&v| v == UNQUERIED).collect();
    mask.extend([true, true]);
    mask
}

/// Network input for an internal state: the raw output vector.
pub fn encode_internal(state: &InternalState) -> Vec<f64> {
    state.outputs.clone()
}
