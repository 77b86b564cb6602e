//! Pipeline defaults shared by the commands and the acceptance checks.
//!
//! The internal learner runs at a higher learning rate and entropy bonus than
//! [`TrainConfig::default`]: with the library defaults it collapses to
//! immediate classification. Several restarts are trained and the best by
//! greedy training return is kept. The outer learner uses a short horizon
//! and scaled rewards so its updates are not swamped by queue-length noise.

use hsched_core::rl::TrainConfig;

pub const CORPUS_ITEMS: usize = 2000;
pub const CORPUS_DETECTORS: usize = 5;
pub const TEST_FRACTION: f64 = 0.1;
pub const SPLIT_SEED: u64 = 0;

pub const INTERNAL_EPISODES: u64 = 300_000;
pub const INTERNAL_RESTARTS: usize = 4;
pub const INTERNAL_LEARNING_RATE: f64 = 3e-4;
pub const INTERNAL_ENTROPY: f64 = 0.05;

pub const WINDOW: usize = 10;
pub const OUTER_EPOCHS: u64 = 34;
pub const OUTER_LEARNING_RATE: f64 = 1e-3;
pub const OUTER_GAMMA: f64 = 0.7;
pub const OUTER_REWARD_SCALE: f64 = 0.1;

pub fn internal_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: INTERNAL_LEARNING_RATE,
        entropy_coef: INTERNAL_ENTROPY,
        episodes: INTERNAL_EPISODES,
        seed,
        ..TrainConfig::default()
    }
}

/// `train_len` is the size of the training split; one epoch is one episode
/// per training item.
pub fn outer_config(seed: u64, train_len: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: OUTER_LEARNING_RATE,
        gamma: OUTER_GAMMA,
        reward_scale: OUTER_REWARD_SCALE,
        episodes: OUTER_EPOCHS * train_len as u64,
        seed,
        ..TrainConfig::default()
    }
}
