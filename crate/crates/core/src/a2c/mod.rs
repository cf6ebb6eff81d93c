//! n-step advantage actor-critic.
//!
//! Per sample, with target `y` and advantage `A = y - V(o)` held constant:
//!
//! ```text
//! policy loss = -mean[log pi(a|o) * A] - entropy_coef * mean[H(pi(.|o))]
//! value loss  = mean[(V(o) - y)^2]
//! ```

mod metrics;
mod trainer;

pub use metrics::{MetricRow, MetricsCsv};
pub use trainer::{eval_env_seed, train, train_env_seed, TrainSummary};

use crate::error::{Error, Result};
use crate::nn::{log_softmax, Gradients, Mlp, NeuronMask, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub n_steps: usize,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Parallel environment instances.
    pub num_envs: usize,
    /// Environment steps summed over all instances.
    pub total_steps: usize,
    /// Environment steps between metric rows.
    pub eval_interval: usize,
    pub seed: u64,
    /// Rollout worker threads; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            n_steps: 5,
            lr: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            num_envs: 8,
            total_steps: 200_000,
            eval_interval: 10_000,
            seed: 0,
            threads: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("γ must lie in [0, 1], got {}", self.gamma)));
        }
        if self.n_steps == 0 || self.num_envs == 0 {
            return Err(Error::Config("n_steps and num_envs must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 || !(self.max_grad_norm > 0.0) {
            return Err(Error::Config("learning rate, coefficients and clip norm must be non-negative".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// n-step regression targets for one agent's rollout segment.
///
/// `y_t = sum_{j} gamma^j r_{t+j} + gamma^{n-t} V(o_n)`, where the sum stops
/// at the first terminal step at or after `t` and then no bootstrap is added.
pub fn compute_nstep_targets(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    assert_eq!(rewards.len(), dones.len());
    let mut ret = bootstrap;
    let mut out = vec![0.0; rewards.len()];
    for t in (0..rewards.len()).rev() {
        if dones[t] {
            ret = 0.0;
        }
        ret = rewards[t] + gamma * ret;
        out[t] = ret;
    }
    out
}

pub struct PolicySample<'a> {
    pub trace: &'a Trace,
    pub mask: Option<&'a NeuronMask>,
    pub action: usize,
    pub advantage: f64,
}

pub struct ValueSample<'a> {
    pub input: &'a [f64],
    pub mask: Option<&'a NeuronMask>,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLossParts {
    pub loss: f64,
    pub entropy: f64,
}

fn entropy_of(probs: &[f64], logp: &[f64]) -> f64 {
    -probs.iter().zip(logp).map(|(p, l)| p * l).sum::<f64>()
}

/// Accumulates the policy-loss gradient of `batch` into `grads`.
///
/// `scale` multiplies every per-sample term; pass `1 / batch_size` for the mean.
pub fn policy_loss_into(
    actor: &Mlp,
    batch: &[PolicySample<'_>],
    entropy_coef: f64,
    scale: f64,
    grads: &mut Gradients,
) -> Result<PolicyLossParts> {
    let mut loss = 0.0;
    let mut entropy = 0.0;
    for s in batch {
        let probs = s.trace.output();
        if s.action >= probs.len() {
            return Err(Error::Contract(format!("action {} outside policy support", s.action)));
        }
        let logp = log_softmax(s.trace.logits());
        let h = entropy_of(probs, &logp);
        loss += -logp[s.action] * s.advantage - entropy_coef * h;
        entropy += h;
        // d/dz of -A log p_a is A (p - e_a); d/dz of -c H is c p_j (log p_j + H).
        let upstream: Vec<f64> = probs
            .iter()
            .zip(&logp)
            .enumerate()
            .map(|(j, (&p, &lp))| {
                let onehot = if j == s.action { 1.0 } else { 0.0 };
                s.advantage * (p - onehot) + entropy_coef * p * (lp + h)
            })
            .collect();
        actor.backward_into(s.trace, s.mask, &upstream, scale, grads)?;
    }
    let parts = PolicyLossParts {
        loss: loss * scale,
        entropy: entropy * scale,
    };
    if !parts.loss.is_finite() {
        return Err(Error::Numeric("non-finite policy loss".into()));
    }
    Ok(parts)
}

/// Mean policy loss and its gradient.
pub fn policy_loss(actor: &Mlp, batch: &[PolicySample<'_>], entropy_coef: f64) -> Result<(PolicyLossParts, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty policy batch".into()));
    }
    let mut grads = Gradients::zeros_like(actor);
    let parts = policy_loss_into(actor, batch, entropy_coef, 1.0 / batch.len() as f64, &mut grads)?;
    Ok((parts, grads))
}

/// Accumulates `scale * sum (V - y)^2` and its gradient; returns the scaled loss
/// and the predicted values.
pub fn value_loss_into(
    critic: &Mlp,
    batch: &[ValueSample<'_>],
    scale: f64,
    grads: &mut Gradients,
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut values = Vec::with_capacity(batch.len());
    for s in batch {
        let trace = critic.forward(s.input, s.mask)?;
        let v = trace.output()[0];
        let diff = v - s.target;
        loss += diff * diff;
        critic.backward_into(&trace, s.mask, &[2.0 * diff], scale, grads)?;
        values.push(v);
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite value loss".into()));
    }
    Ok((loss, values))
}

pub fn value_loss(critic: &Mlp, batch: &[ValueSample<'_>]) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty value batch".into()));
    }
    let mut grads = Gradients::zeros_like(critic);
    let (loss, _) = value_loss_into(critic, batch, 1.0 / batch.len() as f64, &mut grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Head, Layer};
    use proptest::prelude::*;

    /// Direct discounted sums, no recursion.
    fn brute_force_targets(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
        let n = rewards.len();
        (0..n)
            .map(|t| {
                let mut y = 0.0;
                for j in t..n {
                    y += gamma.powi((j - t) as i32) * rewards[j];
                    if dones[j] {
                        return y;
                    }
                }
                y + gamma.powi((n - t) as i32) * bootstrap
            })
            .collect()
    }

    #[test]
    fn nstep_examples() {
        assert_eq!(compute_nstep_targets(&[1.0, 2.0, 3.0], &[false; 3], 10.0, 0.0), vec![1.0, 2.0, 3.0]);
        assert_eq!(compute_nstep_targets(&[1.0, 2.0], &[false, false], 4.0, 0.5)[0], 3.0);
        let y = compute_nstep_targets(&[1.0, 2.0], &[false, true], 100.0, 0.9);
        assert_eq!(y[0], 1.0 + 0.9 * 2.0);
        assert_eq!(y[1], 2.0);
        // One-step case is r + γ V(o').
        assert_eq!(compute_nstep_targets(&[0.5], &[false], 2.0, 0.9), vec![0.5 + 0.9 * 2.0]);
    }

    proptest! {
        #[test]
        fn nstep_matches_brute_force(
            steps in proptest::collection::vec((-5.0f64..5.0, proptest::bool::weighted(0.2)), 1..12),
            bootstrap in -10.0f64..10.0,
            gamma in 0.0f64..=1.0,
        ) {
            let rewards: Vec<f64> = steps.iter().map(|s| s.0).collect();
            let dones: Vec<bool> = steps.iter().map(|s| s.1).collect();
            let fast = compute_nstep_targets(&rewards, &dones, bootstrap, gamma);
            let slow = brute_force_targets(&rewards, &dones, bootstrap, gamma);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn policy_loss_scalar_case() {
        // Zero net with two actions: π(a|o) = 0.5.
        let actor = Mlp::zeros(&[2, 3, 2], Activation::Relu, Head::Softmax).unwrap();
        let trace = actor.forward(&[0.1, 0.2], None).unwrap();
        let batch = [PolicySample {
            trace: &trace,
            mask: None,
            action: 1,
            advantage: 2.0,
        }];
        let (parts, _) = policy_loss(&actor, &batch, 0.0).unwrap();
        assert!((parts.loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((parts.loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let actor = Mlp::new(&[3, 4, 3], Activation::Relu, Head::Softmax, &mut crate::rng::stream(1, 0, 0)).unwrap();
        let traces: Vec<_> = (0..4)
            .map(|i| actor.forward(&[i as f64, 0.5, -0.5], None).unwrap())
            .collect();
        let batch: Vec<_> = traces
            .iter()
            .enumerate()
            .map(|(i, t)| PolicySample { trace: t, mask: None, action: i % 3, advantage: 0.0 })
            .collect();
        let (_, g) = policy_loss(&actor, &batch, 0.0).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn value_loss_examples() {
        let one = Layer { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![0.0] };
        let out = Layer { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![1.0] };
        let critic = Mlp::from_layers(vec![one, out], Activation::Relu, Head::Linear).unwrap();
        let x = [0.0];
        let (loss, g) = value_loss(&critic, &[ValueSample { input: &x, mask: None, target: 3.0 }]).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g.layers[1].biases[0], 2.0 * (1.0 - 3.0));
        let (loss, _) = value_loss(&critic, &[ValueSample { input: &x, mask: None, target: 1.0 }]).unwrap();
        assert_eq!(loss, 0.0);
    }

    fn perturbed(net: &Mlp, idx: usize, delta: f64) -> Mlp {
        let mut p = net.clone();
        let mut flat = p.flat_params();
        flat[idx] += delta;
        p.set_flat_params(&flat).unwrap();
        p
    }

    fn policy_value(actor: &Mlp, inputs: &[Vec<f64>], mask: Option<&NeuronMask>, actions: &[usize], adv: &[f64], c: f64) -> f64 {
        let traces: Vec<Trace> = inputs.iter().map(|x| actor.forward(x, mask).unwrap()).collect();
        let batch: Vec<PolicySample<'_>> = traces
            .iter()
            .zip(actions)
            .zip(adv)
            .map(|((t, &a), &v)| PolicySample { trace: t, mask, action: a, advantage: v })
            .collect();
        policy_loss(actor, &batch, c).unwrap().0.loss
    }

    #[test]
    fn policy_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(5, 0, 0);
        let actor = Mlp::new(&[4, 6, 5, 3], Activation::Tanh, Head::Softmax, &mut rng).unwrap();
        let mask = NeuronMask::new(vec![vec![true, false, true, true, true, false], vec![true, true, false, true, true]]);
        let inputs = vec![vec![0.3, -0.2, 0.9, 0.1], vec![-0.5, 0.4, 0.0, 0.7], vec![1.0, 1.0, -1.0, 0.2]];
        let actions = [0, 2, 1];
        let adv = [1.5, -0.7, 0.3];
        for mask in [None, Some(&mask)] {
            let traces: Vec<Trace> = inputs.iter().map(|x| actor.forward(x, mask).unwrap()).collect();
            let batch: Vec<PolicySample<'_>> = traces
                .iter()
                .zip(&actions)
                .zip(&adv)
                .map(|((t, &a), &v)| PolicySample { trace: t, mask, action: a, advantage: v })
                .collect();
            let (_, grads) = policy_loss(&actor, &batch, 0.05).unwrap();
            let analytic = grads.flat();
            let h = 1e-6;
            for i in 0..analytic.len() {
                let up = policy_value(&perturbed(&actor, i, h), &inputs, mask, &actions, &adv, 0.05);
                let down = policy_value(&perturbed(&actor, i, -h), &inputs, mask, &actions, &adv, 0.05);
                let numeric = (up - down) / (2.0 * h);
                assert!((numeric - analytic[i]).abs() < 1e-6, "param {i}: {numeric} vs {}", analytic[i]);
            }
        }
    }

    #[test]
    fn value_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(6, 0, 0);
        let critic = Mlp::new(&[3, 5, 1], Activation::Relu, Head::Linear, &mut rng).unwrap();
        let inputs = [vec![0.3, -0.2, 0.9], vec![-0.5, 0.4, 0.1]];
        let targets = [2.0, -1.0];
        let loss_of = |net: &Mlp| {
            let batch: Vec<ValueSample<'_>> = inputs
                .iter()
                .zip(&targets)
                .map(|(x, &y)| ValueSample { input: x, mask: None, target: y })
                .collect();
            value_loss(net, &batch).unwrap()
        };
        let analytic = loss_of(&critic).1.flat();
        let h = 1e-6;
        for i in 0..analytic.len() {
            let numeric = (loss_of(&perturbed(&critic, i, h)).0 - loss_of(&perturbed(&critic, i, -h)).0) / (2.0 * h);
            assert!((numeric - analytic[i]).abs() < 1e-6, "param {i}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        let bad = TrainerConfig { gamma: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainerConfig { n_steps: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
