//! Actor-critic learner shared by the internal and the outer agent.
//!
//! A single hidden ReLU layer feeds two heads: softmax policy logits and a
//! scalar state value. Gradients are derived by hand and applied with RMSprop.

mod checkpoint;
mod net;
mod optim;
mod replay;
mod train;

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT_VERSION};
pub use net::{discounted_returns, sample_action, Forward, Gradients, LossConfig, LossStats, PolicyNet, Trajectory, Transition};
pub use optim::{RmsProp, RmsPropConfig};
pub use replay::ReplayBuffer;
pub use train::{EpisodeSummary, Environment, TrainConfig, Trainer};
