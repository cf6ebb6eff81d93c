//! Identity encoder learned from transitions.
//!
//! The encoder sees only a one-hot agent index and outputs a diagonal Gaussian
//! `q(z | i)`. The decoder predicts `(o_{t+1}, r_t)` from `(z, o_t, a_t)`.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::env::MultiAgentEnv;
use crate::error::{Error, Result};
use crate::nn::{rmsprop_step, Activation, Gradients, Head, Mlp, RmsProp};
use crate::rng::{self, Rng};
use crate::sharing::{build_bindings, Architecture, OptimizerSettings, SharingStrategy};

/// One observed transition of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub agent: usize,
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityVector {
    pub agent: usize,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IdentityMode {
    /// Posterior mean.
    Mean,
    /// One reparameterized draw per agent.
    Sample { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Transitions collected for pre-training.
    pub samples: usize,
    /// KL multiplier; `None` counts the KL once per agent, i.e. `N / dataset size`.
    pub kl_weight: Option<f64>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            encoder_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            epochs: 30,
            lr: 1e-3,
            batch_size: 256,
            samples: 50_000,
            kl_weight: None,
        }
    }
}

/// Pre-training environment seed; never used by training or evaluation.
fn pretrain_env_seed(seed: u64) -> u64 {
    (seed << 20) | (1 << 18)
}

/// Transitions from a freshly initialized, stochastic FuPS policy.
///
/// `steps` counts transitions: every environment step yields one per agent,
/// and a final partial step keeps only the first `steps % N` agents.
pub fn collect_pretraining_data<E, F>(make_env: F, steps: usize, seed: u64) -> Result<Vec<TransitionSample>>
where
    E: MultiAgentEnv,
    F: FnOnce(u64) -> Result<E>,
{
    if steps == 0 {
        return Ok(Vec::new());
    }
    let mut env = make_env(pretrain_env_seed(seed))?;
    let n = env.n_agents();
    let arch = Architecture::new(env.obs_dim(), env.action_dim(), &[64, 64]);
    let policy = build_bindings(SharingStrategy::FuPs, &arch, n, None, seed, OptimizerSettings::default())?;
    let mut rng = rng::stream(seed, rng::STREAM_VAE, 0);
    let mut data = Vec::with_capacity(steps);
    let mut obs = env.reset();
    while data.len() < steps {
        let mut actions = Vec::with_capacity(n);
        for (agent, o) in obs.iter().enumerate() {
            let probs = policy.policy_forward(agent, o)?;
            let mut u: f64 = rng.random();
            let mut a = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                if u < *p {
                    a = i;
                    break;
                }
                u -= p;
            }
            actions.push(a);
        }
        let step = env.step(&actions)?;
        let keep = (steps - data.len()).min(n);
        for agent in 0..keep {
            data.push(TransitionSample {
                agent,
                obs: obs[agent].clone(),
                action: actions[agent],
                reward: step.rewards[agent],
                next_obs: step.observations[agent].clone(),
            });
        }
        obs = if step.done { env.reset() } else { step.observations };
    }
    Ok(data)
}

/// Closed-form `KL(N(mu, diag exp(logvar)) || N(0, I))`.
pub fn gaussian_kl(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub encoder: Mlp,
    pub decoder: Mlp,
    n_agents: usize,
    obs_dim: usize,
    action_dim: usize,
    latent_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboParts {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

impl Vae {
    pub fn new(n_agents: usize, obs_dim: usize, action_dim: usize, cfg: &VaeConfig, seed: u64) -> Result<Self> {
        if cfg.latent_dim == 0 || n_agents == 0 {
            return Err(Error::Config("latent dimension and agent count must be positive".into()));
        }
        let mut rng = rng::stream(seed, rng::STREAM_VAE, 1);
        let mut enc_sizes = vec![n_agents];
        enc_sizes.extend(&cfg.encoder_hidden);
        enc_sizes.push(2 * cfg.latent_dim);
        let mut dec_sizes = vec![cfg.latent_dim + obs_dim + action_dim];
        dec_sizes.extend(&cfg.decoder_hidden);
        dec_sizes.push(obs_dim + 1);
        Ok(Self {
            encoder: Mlp::new(&enc_sizes, Activation::Tanh, Head::Linear, &mut rng)?,
            decoder: Mlp::new(&dec_sizes, Activation::Relu, Head::Linear, &mut rng)?,
            n_agents,
            obs_dim,
            action_dim,
            latent_dim: cfg.latent_dim,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn one_hot(&self, agent: usize) -> Result<Vec<f64>> {
        if agent >= self.n_agents {
            return Err(Error::Contract(format!(
                "agent index {agent} out of range for {} agents",
                self.n_agents
            )));
        }
        Ok((0..self.n_agents).map(|j| if j == agent { 1.0 } else { 0.0 }).collect())
    }

    /// Posterior `(mu, logvar)` of an agent.
    pub fn posterior(&self, agent: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.encoder.output(&self.one_hot(agent)?, None)?;
        let (mu, logvar) = out.split_at(self.latent_dim);
        Ok((mu.to_vec(), logvar.to_vec()))
    }

    pub fn identity_vector(&self, agent: usize, mode: IdentityMode) -> Result<IdentityVector> {
        let (mu, logvar) = self.posterior(agent)?;
        let z = match mode {
            IdentityMode::Mean => mu,
            IdentityMode::Sample { seed } => {
                let mut rng = rng::stream(seed, rng::STREAM_IDENTITY, agent as u64);
                mu.iter()
                    .zip(&logvar)
                    .map(|(m, lv)| m + (0.5 * lv).exp() * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("identity vector of agent {agent} is not finite")));
        }
        Ok(IdentityVector { agent, z })
    }

    pub fn identity_vectors(&self, mode: IdentityMode) -> Result<Vec<IdentityVector>> {
        (0..self.n_agents).map(|i| self.identity_vector(i, mode)).collect()
    }

    fn check_sample(&self, s: &TransitionSample) -> Result<()> {
        if s.obs.len() != self.obs_dim || s.next_obs.len() != self.obs_dim || s.action >= self.action_dim {
            return Err(Error::Dimension(format!(
                "transition of agent {} does not match obs dim {} / {} actions",
                s.agent, self.obs_dim, self.action_dim
            )));
        }
        Ok(())
    }

    /// Batch ELBO loss and its exact gradients for the given noise draws.
    ///
    /// `eps[s]` is the standard-normal noise of sample `s`. Returns the loss
    /// parts and `(encoder, decoder)` gradients.
    pub fn elbo_loss(
        &self,
        batch: &[&TransitionSample],
        eps: &[Vec<f64>],
        kl_weight: f64,
    ) -> Result<(ElboParts, Gradients, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty ELBO batch".into()));
        }
        if eps.len() != batch.len() || eps.iter().any(|e| e.len() != self.latent_dim) {
            return Err(Error::Dimension("noise does not match batch and latent size".into()));
        }
        let b = batch.len() as f64;
        let m = self.latent_dim;

        let mut agents: Vec<usize> = batch.iter().map(|s| s.agent).collect();
        agents.sort_unstable();
        agents.dedup();
        let mut enc_traces = Vec::with_capacity(agents.len());
        for &a in &agents {
            enc_traces.push(self.encoder.forward(&self.one_hot(a)?, None)?);
        }
        let slot = |agent: usize| agents.binary_search(&agent).unwrap();
        let mut enc_upstream = vec![vec![0.0; 2 * m]; agents.len()];

        let mut dec_grads = Gradients::zeros_like(&self.decoder);
        let mut recon = 0.0;
        let mut kl = 0.0;
        for (s, e) in batch.iter().zip(eps) {
            self.check_sample(s)?;
            let k = slot(s.agent);
            let out = enc_traces[k].output();
            let (mu, logvar) = out.split_at(m);
            let sigma: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();

            let mut input = Vec::with_capacity(m + self.obs_dim + self.action_dim);
            input.extend(mu.iter().zip(&sigma).zip(e).map(|((mu, sd), e)| mu + sd * e));
            input.extend_from_slice(&s.obs);
            input.extend((0..self.action_dim).map(|a| if a == s.action { 1.0 } else { 0.0 }));
            let trace = self.decoder.forward(&input, None)?;
            let pred = trace.output();

            let od = self.obs_dim as f64;
            let mut upstream = Vec::with_capacity(self.obs_dim + 1);
            let mut sample_recon = 0.0;
            for (p, t) in pred.iter().zip(&s.next_obs) {
                sample_recon += (p - t) * (p - t) / od;
                upstream.push(2.0 * (p - t) / od);
            }
            let dr = pred[self.obs_dim] - s.reward;
            sample_recon += dr * dr;
            upstream.push(2.0 * dr);
            recon += sample_recon;

            let dinput = self.decoder.backward_into(&trace, None, &upstream, 1.0 / b, &mut dec_grads)?;
            let up = &mut enc_upstream[k];
            for d in 0..m {
                let dz = dinput[d];
                up[d] += dz + kl_weight * mu[d] / b;
                up[m + d] += dz * e[d] * 0.5 * sigma[d] + kl_weight * 0.5 * (logvar[d].exp() - 1.0) / b;
            }
            kl += gaussian_kl(mu, logvar);
        }

        let mut enc_grads = Gradients::zeros_like(&self.encoder);
        for (trace, up) in enc_traces.iter().zip(&enc_upstream) {
            self.encoder.backward_into(trace, None, up, 1.0, &mut enc_grads)?;
        }
        let parts = ElboParts {
            loss: (recon + kl_weight * kl) / b,
            reconstruction: recon / b,
            kl: kl / b,
        };
        if !parts.loss.is_finite() {
            return Err(Error::Numeric("non-finite ELBO loss".into()));
        }
        Ok((parts, enc_grads, dec_grads))
    }
}

/// Minibatch RMSProp on the ELBO. Returns the mean loss of every epoch.
pub fn train_vae(vae: &mut Vae, data: &[TransitionSample], cfg: &VaeConfig, seed: u64) -> Result<Vec<f64>> {
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    if data.is_empty() {
        return Err(Error::Config("VAE training needs at least one transition".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let kl_weight = cfg.kl_weight.unwrap_or(vae.n_agents as f64 / data.len() as f64);
    let opt = OptimizerSettings::default();
    let mut enc_opt = RmsProp::new(&vae.encoder, opt.decay, opt.epsilon);
    let mut dec_opt = RmsProp::new(&vae.decoder, opt.decay, opt.epsilon);
    let mut rng: Rng = rng::stream(seed, rng::STREAM_VAE, 2);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TransitionSample> = chunk.iter().map(|&i| &data[i]).collect();
            let eps: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| (0..vae.latent_dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let (parts, ge, gd) = vae
                .elbo_loss(&batch, &eps, kl_weight)
                .map_err(|e| Error::Numeric(format!("VAE diverged in epoch {epoch}: {e}")))?;
            rmsprop_step(&mut vae.encoder, &ge, &mut enc_opt, cfg.lr)?;
            rmsprop_step(&mut vae.decoder, &gd, &mut dec_opt, cfg.lr)?;
            total += parts.loss * batch.len() as f64;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}

/// Writes one `index z_1 .. z_m` line per agent.
pub fn write_identities<W: Write>(mut out: W, ids: &[IdentityVector]) -> Result<()> {
    for id in ids {
        let z: Vec<String> = id.z.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{} {}", id.agent, z.join(" "))?;
    }
    Ok(())
}

pub fn read_identities<R: BufRead>(input: R) -> Result<Vec<IdentityVector>> {
    let mut ids: Vec<IdentityVector> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let agent = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| Error::Parse(format!("line {}: missing agent index", n + 1)))?;
        let z = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        if z.is_empty() || ids.first().is_some_and(|f| f.z.len() != z.len()) {
            return Err(Error::Parse(format!("line {}: inconsistent latent dimension", n + 1)));
        }
        if agent != ids.len() {
            return Err(Error::Parse(format!("line {}: expected agent {}, found {agent}", n + 1, ids.len())));
        }
        ids.push(IdentityVector { agent, z });
    }
    Ok(ids)
}

pub fn save_identities(path: &Path, ids: &[IdentityVector]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_identities(&mut f, ids)?;
    f.flush()?;
    Ok(())
}

pub fn load_identities(path: &Path) -> Result<Vec<IdentityVector>> {
    read_identities(std::io::BufReader::new(std::fs::File::open(path)?))
}
