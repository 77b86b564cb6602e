//! Two-tier reinforcement-learning scheduler for queues of multi-step items.
//!
//! An internal agent decides, for one item at a time, which detector to query
//! next or when to stop and classify. An outer agent decides which queued item
//! the frozen internal agent advances next, one action at a time. A tournament
//! reduction ([`hierarchy`]) lets an outer agent trained on a fixed window
//! schedule queues of any length, and [`baselines`] provides the classical
//! schedulers it is compared against.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod hierarchy;
pub mod internal;
pub mod outer;
pub mod rl;
pub mod seed;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
