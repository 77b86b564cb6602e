use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-hidden-layer actor-critic network with a flat parameter vector.
///
/// Layout: `w1[hidden][input]`, `b1[hidden]`, `wp[action][hidden]`,
/// `bp[action]`, `wv[hidden]`, `bv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    input_dim: usize,
    hidden_dim: usize,
    action_dim: usize,
    params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    b1: usize,
    wp: usize,
    bp: usize,
    wv: usize,
    bv: usize,
    len: usize,
}

fn offsets(input: usize, hidden: usize, action: usize) -> Offsets {
    let b1 = hidden * input;
    let wp = b1 + hidden;
    let bp = wp + action * hidden;
    let wv = bp + action;
    let bv = wv + hidden;
    Offsets {
        b1,
        wp,
        bp,
        wv,
        bv,
        len: bv + 1,
    }
}

/// Output of a forward pass, with the activations backprop needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Vec<f64>,
    pub value: f64,
    pub logits: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl Forward {
    pub fn hidden_preactivations(&self) -> &[f64] {
        &self.hidden_pre
    }
}

impl PolicyNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(input_dim: usize, hidden_dim: usize, action_dim: usize, rng: &mut R) -> Self {
        let mut net = PolicyNet::zeros(input_dim, hidden_dim, action_dim);
        let o = net.offsets();
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[range] {
                *p = rng.random_range(-limit..=limit);
            }
        };
        fill(0..o.b1, input_dim, hidden_dim);
        fill(o.wp..o.bp, hidden_dim, action_dim);
        fill(o.wv..o.bv, hidden_dim, 1);
        net
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, action_dim: usize) -> Self {
        let len = offsets(input_dim, hidden_dim, action_dim).len;
        PolicyNet {
            input_dim,
            hidden_dim,
            action_dim,
            params: vec![0.0; len],
        }
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        action_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        let want = offsets(input_dim, hidden_dim, action_dim).len;
        if params.len() != want {
            return Err(Error::usage(format!(
                "expected {want} parameters, got {}",
                params.len()
            )));
        }
        Ok(PolicyNet {
            input_dim,
            hidden_dim,
            action_dim,
            params,
        })
    }

    fn offsets(&self) -> Offsets {
        offsets(self.input_dim, self.hidden_dim, self.action_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64], mask: Option<&[bool]>) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::usage(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if let Some(m) = mask {
            if m.len() != self.action_dim {
                return Err(Error::usage(format!(
                    "mask has length {}, network has {} actions",
                    m.len(),
                    self.action_dim
                )));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::usage("mask allows no action"));
            }
        }
        Ok(())
    }

    /// Masked forward pass. Masked actions get logit `-inf` and probability 0.
    pub fn forward(&self, x: &[f64], mask: Option<&[bool]>) -> Result<Forward> {
        self.check_input(x, mask)?;
        let o = self.offsets();
        let p = &self.params;
        let (ni, nh, na) = (self.input_dim, self.hidden_dim, self.action_dim);

        let mut hidden_pre = vec![0.0; nh];
        let mut hidden = vec![0.0; nh];
        for h in 0..nh {
            let row = &p[h * ni..(h + 1) * ni];
            let z = p[o.b1 + h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            hidden_pre[h] = z;
            hidden[h] = z.max(0.0);
        }

        let mut logits = vec![f64::NEG_INFINITY; na];
        for a in 0..na {
            if mask.is_some_and(|m| !m[a]) {
                continue;
            }
            let row = &p[o.wp + a * nh..o.wp + (a + 1) * nh];
            logits[a] = p[o.bp + a] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>();
        }
        let value = p[o.bv]
            + p[o.wv..o.bv]
                .iter()
                .zip(&hidden)
                .map(|(w, v)| w * v)
                .sum::<f64>();

        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() || !value.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite forward pass (max logit {max}, value {value})"
            )));
        }
        let mut probs: Vec<f64> = logits
            .iter()
            .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() })
            .collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|q| *q /= total);

        Ok(Forward {
            probs,
            value,
            logits,
            hidden_pre,
            hidden,
        })
    }

    /// Highest-logit legal action; ties go to the lowest index.
    pub fn greedy(&self, x: &[f64], mask: Option<&[bool]>) -> Result<usize> {
        let f = self.forward(x, mask)?;
        let mut best = None;
        for (a, &l) in f.logits.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            match best {
                Some((_, bl)) if l <= bl => {}
                _ => best = Some((a, l)),
            }
        }
        Ok(best.expect("mask checked non-empty").0)
    }
}

/// Draw an index with probability proportional to `probs`.
pub fn sample_action<R: Rng>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) || probs.iter().any(|p| *p < 0.0 || !p.is_finite()) {
        return Err(Error::usage("cannot sample from a degenerate distribution"));
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
    pub terminal: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// `G_t = r_t + gamma * G_{t+1}`, with `G` after the last step taken as 0.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
}

/// Gradient of the total loss, laid out like [`PolicyNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &PolicyNet) -> Self {
        Gradients(vec![0.0; net.n_params()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

impl PolicyNet {
    /// Analytic gradient of
    /// `sum_t [ -A_t log pi(a_t|s_t) + c_v (G_t - V(s_t))^2 - beta H(pi(.|s_t)) ]`
    /// where `A_t = G_t - V(s_t)` is held constant.
    pub fn compute_gradients(
        &self,
        trajectory: &Trajectory,
        cfg: &LossConfig,
    ) -> Result<(Gradients, LossStats)> {
        if trajectory.is_empty() {
            return Err(Error::usage("cannot compute gradients of an empty trajectory"));
        }
        let rewards: Vec<f64> = trajectory.steps.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, cfg.gamma);

        let o = self.offsets();
        let (ni, nh, na) = (self.input_dim, self.hidden_dim, self.action_dim);
        let p = &self.params;
        let mut grad = Gradients::zeros_like(self);
        let g = &mut grad.0;
        let mut stats = LossStats::default();

        let mut dlogits = vec![0.0; na];
        let mut dhidden = vec![0.0; nh];
        for (step, &ret) in trajectory.steps.iter().zip(&returns) {
            if step.action >= na {
                return Err(Error::usage(format!("action {} out of range", step.action)));
            }
            let f = self.forward(&step.observation, Some(&step.mask))?;
            let prob_a = f.probs[step.action];
            if !(prob_a > 0.0) {
                return Err(Error::usage(format!(
                    "action {} has zero probability under its mask",
                    step.action
                )));
            }
            let advantage = ret - f.value;
            let log_probs: Vec<f64> = f
                .probs
                .iter()
                .map(|&q| if q > 0.0 { q.ln() } else { 0.0 })
                .collect();
            let entropy: f64 = -f.probs.iter().zip(&log_probs).map(|(q, l)| q * l).sum::<f64>();
            stats.actor_loss -= advantage * log_probs[step.action];
            stats.critic_loss += advantage * advantage;
            stats.entropy += entropy;

            for a in 0..na {
                let q = f.probs[a];
                if q == 0.0 {
                    dlogits[a] = 0.0;
                    continue;
                }
                let onehot = if a == step.action { 1.0 } else { 0.0 };
                dlogits[a] = -advantage * (onehot - q) + cfg.entropy_coef * q * (log_probs[a] + entropy);
            }
            let dvalue = -2.0 * cfg.value_coef * advantage;

            dhidden.iter_mut().for_each(|d| *d = 0.0);
            for a in 0..na {
                let d = dlogits[a];
                if d == 0.0 {
                    continue;
                }
                g[o.bp + a] += d;
                for h in 0..nh {
                    g[o.wp + a * nh + h] += d * f.hidden[h];
                    dhidden[h] += d * p[o.wp + a * nh + h];
                }
            }
            g[o.bv] += dvalue;
            for h in 0..nh {
                g[o.wv + h] += dvalue * f.hidden[h];
                dhidden[h] += dvalue * p[o.wv + h];
            }
            for h in 0..nh {
                if f.hidden_pre[h] <= 0.0 {
                    continue;
                }
                let d = dhidden[h];
                g[o.b1 + h] += d;
                for (i, &x) in step.observation.iter().enumerate() {
                    g[h * ni + i] += d * x;
                }
            }
        }
        if !grad.is_finite() {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok((grad, stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{rng_for, Stream};

    #[test]
    fn zero_net_is_uniform() {
        let net = PolicyNet::zeros(3, 4, 4);
        let f = net.forward(&[0.3, -0.2, 1.0], None).unwrap();
        assert_eq!(f.probs, vec![0.25; 4]);
        assert_eq!(f.value, 0.0);
    }

    #[test]
    fn mask_forces_single_action() {
        let mut rng = rng_for(1, Stream::Misc, 0);
        let net = PolicyNet::new(3, 5, 4, &mut rng);
        let f = net
            .forward(&[0.1, 0.2, 0.3], Some(&[false, false, true, false]))
            .unwrap();
        assert_eq!(f.probs, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let net = PolicyNet::zeros(3, 2, 2);
        assert!(matches!(net.forward(&[1.0], None), Err(Error::Usage(_))));
        assert!(matches!(
            net.forward(&[1.0, 1.0, 1.0], Some(&[false, false])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn greedy_tie_breaks_low() {
        let net = PolicyNet::zeros(2, 2, 3);
        assert_eq!(net.greedy(&[0.0, 0.0], None).unwrap(), 0);
        assert_eq!(net.greedy(&[0.0, 0.0], Some(&[false, true, true])).unwrap(), 1);
    }

    #[test]
    fn sampling() {
        let mut rng = rng_for(3, Stream::Misc, 0);
        for _ in 0..100 {
            assert_eq!(sample_action(&[0.0, 1.0, 0.0], &mut rng).unwrap(), 1);
        }
        assert!(sample_action(&[0.0, 0.0], &mut rng).is_err());
        let draw = |seed| {
            let mut r = rng_for(seed, Stream::Misc, 0);
            (0..20)
                .map(|_| sample_action(&[0.25; 4], &mut r).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }

    #[test]
    fn gamma_zero_returns_rewards() {
        let r = [1.0, -2.0, 3.5];
        assert_eq!(discounted_returns(&r, 0.0), r.to_vec());
        assert_eq!(discounted_returns(&r, 1.0), vec![2.5, 1.5, 3.5]);
    }

    #[test]
    fn zero_advantage_gives_zero_actor_gradient() {
        // Zero output weights: V(s) = 0, and with reward 0 the advantage is 0.
        let mut rng = rng_for(2, Stream::Misc, 0);
        let mut net = PolicyNet::new(3, 4, 3, &mut rng);
        let o = net.offsets();
        net.params[o.wv..].iter_mut().for_each(|p| *p = 0.0);
        let traj = Trajectory {
            steps: vec![Transition {
                observation: vec![0.5, -0.5, 0.2],
                action: 1,
                reward: 0.0,
                mask: vec![true; 3],
            }],
            terminal: true,
        };
        let cfg = LossConfig {
            gamma: 0.99,
            entropy_coef: 0.0,
            value_coef: 0.5,
        };
        let (g, _) = net.compute_gradients(&traj, &cfg).unwrap();
        assert!(g.0.iter().all(|&v| v == 0.0));
    }
}
