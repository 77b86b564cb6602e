use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{sample_action, Gradients, LossConfig, PolicyNet, Trajectory, Transition};
use super::optim::{RmsProp, RmsPropConfig};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::seed::{rng_for, Stream};

/// An episodic environment with a discrete action space.
pub trait Environment {
    fn observation(&self) -> Vec<f64>;
    fn action_mask(&self) -> Vec<bool>;
    /// Applies `action`, returning `(reward, done)`.
    fn step(&mut self, action: usize) -> Result<(f64, bool)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub replay_capacity: usize,
    pub replay_activation_episode: u64,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Rewards are multiplied by this before entering the loss.
    pub reward_scale: f64,
    pub hidden_dim: usize,
    pub episodes: u64,
    /// Sample only legal actions during training.
    pub mask_illegal: bool,
    pub max_steps_per_episode: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 7e-5,
            decay: 0.99,
            epsilon: 1e-2,
            replay_capacity: 10,
            replay_activation_episode: 1000,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            reward_scale: 1.0,
            hidden_dim: 20,
            episodes: 20_000,
            mask_illegal: true,
            max_steps_per_episode: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("decay", self.decay),
            ("epsilon", self.epsilon),
            ("reward_scale", self.reward_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.decay >= 1.0 {
            return Err(Error::config("decay must be < 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::config("loss coefficients must be non-negative"));
        }
        if self.hidden_dim == 0 || self.max_steps_per_episode == 0 {
            return Err(Error::config("hidden_dim and max_steps_per_episode must be positive"));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
        }
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            decay: self.decay,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeSummary {
    /// Undiscounted, unscaled return.
    pub total_reward: f64,
    pub steps: usize,
    pub terminal: bool,
}

/// Owns a network, its optimizer state, the replay buffer and the RNG.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub(crate) net: PolicyNet,
    pub(crate) optimizer: RmsProp,
    pub(crate) replay: ReplayBuffer<Trajectory>,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) episode: u64,
    pub(crate) config: TrainConfig,
}

impl Trainer {
    /// Fresh network of shape `input_dim -> hidden_dim -> action_dim`,
    /// initialised from the config seed.
    pub fn new(input_dim: usize, action_dim: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng_for(config.seed, Stream::Init, 0);
        let net = PolicyNet::new(input_dim, config.hidden_dim, action_dim, &mut init_rng);
        Ok(Trainer {
            optimizer: RmsProp::new(net.n_params()),
            replay: ReplayBuffer::new(config.replay_capacity),
            rng: rng_for(config.seed, Stream::Training, 0),
            episode: 0,
            net,
            config,
        })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn into_net(self) -> PolicyNet {
        self.net
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn replay(&self) -> &ReplayBuffer<Trajectory> {
        &self.replay
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Roll out one episode with the current stochastic policy, then apply one
    /// RMSprop update from it (plus one replayed episode once replay is active).
    pub fn run_episode<E: Environment>(&mut self, env: &mut E) -> Result<EpisodeSummary> {
        let mut traj = Trajectory::default();
        let mut total = 0.0;
        let all_legal = vec![true; self.net.action_dim()];
        for _ in 0..self.config.max_steps_per_episode {
            let observation = env.observation();
            let mask = if self.config.mask_illegal {
                env.action_mask()
            } else {
                all_legal.clone()
            };
            let fwd = self.net.forward(&observation, Some(&mask))?;
            let action = sample_action(&fwd.probs, &mut self.rng)?;
            let (reward, done) = env.step(action)?;
            total += reward;
            traj.steps.push(Transition {
                observation,
                action,
                reward: reward * self.config.reward_scale,
                mask,
            });
            if done {
                traj.terminal = true;
                break;
            }
        }
        let summary = EpisodeSummary {
            total_reward: total,
            steps: traj.len(),
            terminal: traj.terminal,
        };
        self.update(traj)?;
        Ok(summary)
    }

    fn update(&mut self, traj: Trajectory) -> Result<()> {
        if traj.is_empty() {
            self.episode += 1;
            return Ok(());
        }
        let loss = self.config.loss();
        let (mut grads, _) = self.net.compute_gradients(&traj, &loss).map_err(|e| {
            Error::Numerical(format!("episode {}: {e}", self.episode))
        })?;
        let replay_active = self.episode >= self.config.replay_activation_episode;
        if replay_active {
            if let Some(old) = self.replay.sample(&mut self.rng) {
                let (g, _) = self.net.compute_gradients(old, &loss)?;
                grads.add_assign(&g);
            }
        }
        self.optimizer.step(&mut self.net, &grads, &self.config.optimizer())?;
        if self.net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!(
                "parameters diverged at episode {}",
                self.episode
            )));
        }
        if replay_active {
            self.replay.push(traj);
        }
        self.episode += 1;
        Ok(())
    }

    /// Gradient of the current episode only; exposed for diagnostics.
    pub fn gradients(&self, traj: &Trajectory) -> Result<Gradients> {
        Ok(self.net.compute_gradients(traj, &self.config.loss())?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-armed bandit: arm 1 pays 1, arm 0 pays 0.
    struct Bandit;

    impl Environment for Bandit {
        fn observation(&self) -> Vec<f64> {
            vec![1.0]
        }
        fn action_mask(&self) -> Vec<bool> {
            vec![true, true]
        }
        fn step(&mut self, action: usize) -> Result<(f64, bool)> {
            Ok((action as f64, true))
        }
    }

    #[test]
    fn learns_a_bandit() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            episodes: 2000,
            hidden_dim: 4,
            replay_activation_episode: 100,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(1, 2, cfg).unwrap();
        for _ in 0..2000 {
            t.run_episode(&mut Bandit).unwrap();
        }
        let p = t.net().forward(&[1.0], None).unwrap().probs;
        assert!(p[1] > 0.9, "{p:?}");
    }

    #[test]
    fn replay_stays_bounded_and_starts_late() {
        let cfg = TrainConfig {
            replay_activation_episode: 50,
            ..TrainConfig::default()
        };
        let mut t = Trainer::new(1, 2, cfg).unwrap();
        for e in 0..200 {
            t.run_episode(&mut Bandit).unwrap();
            if e < 49 {
                assert!(t.replay().is_empty());
            }
            assert!(t.replay().len() <= 10);
        }
        assert_eq!(t.replay().len(), 10);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            gamma: 0.0,
            ..TrainConfig::default()
        };
        assert!(Trainer::new(1, 2, bad).is_err());
    }
}
