//! Experiment configuration as flat `key = value` text.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | "#" comment | key "=" value
//! value   := item ("," item)*        (lists)
//!          | "auto"                  (optional entries: derive from the rest)
//! ```
//!
//! Unknown keys are rejected. Keys left out keep their defaults.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::a2c::TrainerConfig;
use crate::cluster::DEFAULT_LAMBDA;
use crate::env::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::sharing::{Architecture, SharingStrategy, StrategyKind};
use crate::vae::{IdentityMode, VaeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub agents: Vec<usize>,
    pub horizon: usize,
    pub grid: usize,
    pub foods: usize,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,

    pub steps: usize,
    pub eval_interval: usize,
    pub num_envs: usize,
    pub n_steps: usize,
    pub gamma: f64,
    pub lr: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,

    pub latent_dim: usize,
    pub vae_epochs: usize,
    pub vae_samples: usize,
    pub vae_lr: f64,
    pub vae_batch: usize,
    /// Identity extraction: posterior mean, or one seeded sample.
    pub identity_sample: bool,

    /// Cluster count; `None` uses the number of agent types.
    pub clusters: Option<usize>,
    pub lambda: f64,
    /// SNP-PS drop rate; `None` matches the drop rate AdaPS masks realize.
    pub snp_drop_rate: Option<f64>,
    pub eval_episodes: usize,
    pub parallel_jobs: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainerConfig::default();
        let v = VaeConfig::default();
        let e = EnvSpec::bps(&[3, 3, 3]);
        Self {
            env: EnvKind::Bps,
            agents: e.agents_per_type.clone(),
            horizon: e.horizon,
            grid: 8,
            foods: 3,
            strategies: vec![StrategyKind::AdaPs, StrategyKind::FuPs, StrategyKind::NoPs],
            seeds: vec![0, 1, 2, 3],
            hidden: vec![64, 64],
            steps: t.total_steps,
            eval_interval: t.eval_interval,
            num_envs: t.num_envs,
            n_steps: t.n_steps,
            gamma: t.gamma,
            lr: t.lr,
            entropy_coef: t.entropy_coef,
            value_coef: t.value_coef,
            max_grad_norm: t.max_grad_norm,
            latent_dim: v.latent_dim,
            vae_epochs: v.epochs,
            vae_samples: v.samples,
            vae_lr: v.lr,
            vae_batch: v.batch_size,
            identity_sample: false,
            clusters: None,
            lambda: DEFAULT_LAMBDA,
            snp_drop_rate: None,
            eval_episodes: 20,
            parallel_jobs: false,
            out: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn parse_auto<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

impl ExperimentConfig {
    /// Defaults for an environment kind (BPS or LBF differ in horizon).
    pub fn for_env(env: EnvKind, agents: &[usize]) -> Self {
        let spec = match env {
            EnvKind::Bps => EnvSpec::bps(agents),
            EnvKind::Lbf => EnvSpec::lbf(agents),
        };
        Self {
            env,
            agents: agents.to_vec(),
            horizon: spec.horizon,
            grid: spec.grid,
            foods: spec.foods,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "env" => self.env = parse(key, value)?,
            "agents" => self.agents = parse_list(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "foods" => self.foods = parse(key, value)?,
            "strategies" => self.strategies = parse_list(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "num_envs" => self.num_envs = parse(key, value)?,
            "n_steps" => self.n_steps = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "entropy_coef" => self.entropy_coef = parse(key, value)?,
            "value_coef" => self.value_coef = parse(key, value)?,
            "max_grad_norm" => self.max_grad_norm = parse(key, value)?,
            "latent_dim" => self.latent_dim = parse(key, value)?,
            "vae_epochs" => self.vae_epochs = parse(key, value)?,
            "vae_samples" => self.vae_samples = parse(key, value)?,
            "vae_lr" => self.vae_lr = parse(key, value)?,
            "vae_batch" => self.vae_batch = parse(key, value)?,
            "identity_mode" => {
                self.identity_sample = match value {
                    "mean" => false,
                    "sample" => true,
                    _ => return Err(Error::Parse(format!("identity_mode must be mean or sample, got {value:?}"))),
                }
            }
            "clusters" => self.clusters = parse_auto(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "snp_drop_rate" => self.snp_drop_rate = parse_auto(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "parallel_jobs" => self.parallel_jobs = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Parse(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `text` on top of the defaults for its environment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            entries.push((k.trim(), v.trim()));
        }
        let env = match entries.iter().find(|(k, _)| *k == "env") {
            Some((k, v)) => parse(k, v)?,
            None => EnvKind::Bps,
        };
        let mut cfg = Self::for_env(env, &Self::default().agents);
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text; `from_text(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let strategies: Vec<String> = self.strategies.iter().map(StrategyKind::to_string).collect();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("env", self.env.to_string());
        kv("agents", join(&self.agents));
        kv("horizon", self.horizon.to_string());
        kv("grid", self.grid.to_string());
        kv("foods", self.foods.to_string());
        kv("strategies", strategies.join(","));
        kv("seeds", join(&self.seeds));
        kv("hidden", join(&self.hidden));
        kv("steps", self.steps.to_string());
        kv("eval_interval", self.eval_interval.to_string());
        kv("num_envs", self.num_envs.to_string());
        kv("n_steps", self.n_steps.to_string());
        kv("gamma", self.gamma.to_string());
        kv("lr", self.lr.to_string());
        kv("entropy_coef", self.entropy_coef.to_string());
        kv("value_coef", self.value_coef.to_string());
        kv("max_grad_norm", self.max_grad_norm.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("vae_epochs", self.vae_epochs.to_string());
        kv("vae_samples", self.vae_samples.to_string());
        kv("vae_lr", self.vae_lr.to_string());
        kv("vae_batch", self.vae_batch.to_string());
        kv("identity_mode", if self.identity_sample { "sample" } else { "mean" }.to_string());
        kv("clusters", auto(&self.clusters));
        kv("lambda", self.lambda.to_string());
        kv("snp_drop_rate", auto(&self.snp_drop_rate));
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("parallel_jobs", self.parallel_jobs.to_string());
        kv("out", self.out.display().to_string());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("strategy and seed lists must be nonempty".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be a nonempty list of positive widths".into()));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("λ must lie in [0, 1), got {}", self.lambda)));
        }
        if let Some(p) = self.snp_drop_rate {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("SNP drop rate must lie in [0, 1), got {p}")));
            }
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        self.env_spec().validate()?;
        let k = self.k();
        if self.strategies.iter().any(|s| s.needs_pretraining()) && (k == 0 || k >= self.env_spec().n_agents()) {
            return Err(Error::Config(format!("cluster count {k} must lie in [1, N)")));
        }
        self.trainer(0).validate()
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec {
            kind: self.env,
            agents_per_type: self.agents.clone(),
            horizon: self.horizon,
            grid: self.grid,
            foods: self.foods,
            seed: 0,
        }
    }

    pub fn architecture(&self) -> Architecture {
        let spec = self.env_spec();
        Architecture::new(spec.obs_dim(), spec.action_dim(), &self.hidden)
    }

    pub fn k(&self) -> usize {
        self.clusters.unwrap_or(self.agents.len())
    }

    pub fn trainer(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            gamma: self.gamma,
            n_steps: self.n_steps,
            lr: self.lr,
            entropy_coef: self.entropy_coef,
            value_coef: self.value_coef,
            max_grad_norm: self.max_grad_norm,
            num_envs: self.num_envs,
            total_steps: self.steps,
            eval_interval: self.eval_interval,
            seed,
            threads: super::worker_threads(),
        }
    }

    pub fn vae(&self) -> VaeConfig {
        VaeConfig {
            latent_dim: self.latent_dim,
            epochs: self.vae_epochs,
            lr: self.vae_lr,
            batch_size: self.vae_batch,
            samples: self.vae_samples,
            ..Default::default()
        }
    }

    pub fn identity_mode(&self, seed: u64) -> IdentityMode {
        if self.identity_sample {
            IdentityMode::Sample { seed }
        } else {
            IdentityMode::Mean
        }
    }

    /// Concrete strategy for a run; `snp_drop_rate` must already be resolved.
    pub fn strategy(&self, kind: StrategyKind, seed: u64, snp_drop_rate: f64) -> SharingStrategy {
        match kind {
            StrategyKind::NoPs => SharingStrategy::NoPs,
            StrategyKind::FuPs => SharingStrategy::FuPs,
            StrategyKind::FuPsId => SharingStrategy::FuPsId,
            StrategyKind::SePs => SharingStrategy::SePs { k: self.k() },
            StrategyKind::SnpPs => SharingStrategy::SnpPs { drop_rate: snp_drop_rate, seed },
            StrategyKind::AdaPs => SharingStrategy::AdaPs { k: self.k(), lambda: self.lambda },
        }
    }
}
