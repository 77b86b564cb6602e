use serde::{Deserialize, Serialize};

use super::net::{Gradients, PolicyNet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            learning_rate: 7e-5,
            decay: 0.99,
            epsilon: 1e-2,
        }
    }
}

/// Running mean of squared gradients, one slot per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub acc: Vec<f64>,
}

impl RmsProp {
    pub fn new(n_params: usize) -> Self {
        RmsProp {
            acc: vec![0.0; n_params],
        }
    }

    /// `acc = decay * acc + (1 - decay) * g^2; p -= lr * g / (sqrt(acc) + eps)`.
    pub fn step(&mut self, net: &mut PolicyNet, grads: &Gradients, cfg: &RmsPropConfig) -> Result<()> {
        if grads.0.len() != net.n_params() || self.acc.len() != net.n_params() {
            return Err(Error::usage("gradient/optimizer shape does not match the network"));
        }
        for ((p, acc), &g) in net.params_mut().iter_mut().zip(&mut self.acc).zip(&grads.0) {
            *acc = cfg.decay * *acc + (1.0 - cfg.decay) * g * g;
            *p -= cfg.learning_rate * g / (acc.sqrt() + cfg.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{rng_for, Stream};

    fn net() -> PolicyNet {
        PolicyNet::new(2, 3, 2, &mut rng_for(4, Stream::Misc, 0))
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut n = net();
        let before = n.clone();
        let mut opt = RmsProp::new(n.n_params());
        opt.step(&mut n, &Gradients::zeros_like(&before), &RmsPropConfig::default())
            .unwrap();
        assert_eq!(n, before);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = RmsPropConfig::default();
        let mut n = net();
        let before = n.clone();
        let g = 0.3;
        let mut opt = RmsProp::new(n.n_params());
        let grads = Gradients(vec![g; n.n_params()]);
        opt.step(&mut n, &grads, &cfg).unwrap();
        let want = cfg.learning_rate * g / (((1.0 - cfg.decay) * g * g).sqrt() + cfg.epsilon);
        for (a, b) in before.params().iter().zip(n.params()) {
            assert!(((a - b) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_steps_approach_lr() {
        // Iterating the accumulator recurrence by hand: acc_t = g^2 (1 - decay^t),
        // so the step tends to lr * g / (|g| + eps).
        let cfg = RmsPropConfig {
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
        };
        let g = 2.0;
        let mut n = net();
        let mut opt = RmsProp::new(n.n_params());
        let mut last = 0.0;
        for _ in 0..300 {
            let before = n.params()[0];
            let grads = Gradients(vec![g; n.n_params()]);
        opt.step(&mut n, &grads, &cfg).unwrap();
            last = before - n.params()[0];
        }
        assert!((last - cfg.learning_rate).abs() < 1e-9, "{last}");
    }
}
