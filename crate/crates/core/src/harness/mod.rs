//! Experiment pipeline: pre-train identities, cluster, build masks, train,
//! evaluate and report, for every strategy and seed of a config.
//!
//! Output layout under `out/`:
//!
//! ```text
//! config.txt                       echo of the experiment config
//! size_report.csv                  relative model sizes
//! pretrain/seed_<s>/identities.txt one `index z..` line per agent
//! pretrain/seed_<s>/clusters.txt   one `agent cluster` line per agent
//! pretrain/seed_<s>/vae_loss.csv   per-epoch ELBO
//! <strategy>/seed_<s>/metrics.csv  training curve
//! <strategy>/seed_<s>/manifest.txt agent -> parameter set / mask table
//! <strategy>/seed_<s>/masks.txt    AdaPS and SNP-PS only
//! <strategy>/seed_<s>/checkpoints/set_<i>_{actor,critic}.msl
//! <strategy>/seed_<s>/eval.csv     greedy per-agent returns
//! report.csv, summary.csv          per run and per strategy results
//! ```

mod config;

pub use config::ExperimentConfig;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::a2c::{eval_env_seed, train, MetricsCsv};
use crate::cluster::{estimated_drop_fraction, kmeans, ClusterModel, MaskRegistry};
use crate::env::{Env, EnvSpec, MultiAgentEnv};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, Activation, Head};
use crate::sharing::{
    build_bindings, relative_model_size, Architecture, Bindings, OptimizerSettings, Pretrained, SharingStrategy,
    StrategyKind,
};
use crate::vae::{collect_pretraining_data, load_identities, save_identities, train_vae, IdentityVector, Vae};

/// Worker threads from `MASKSHARE_THREADS`; 0 (pool default) when unset.
pub fn worker_threads() -> usize {
    std::env::var("MASKSHARE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Directory name of a strategy.
pub fn slug(kind: StrategyKind) -> String {
    kind.to_string()
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .collect::<String>()
        .to_lowercase()
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episodes: usize,
    /// Mean undiscounted return per agent.
    pub per_agent: Vec<f64>,
    pub per_type: Vec<f64>,
    pub mean: f64,
}

impl Evaluation {
    fn from_totals(totals: Vec<f64>, episodes: usize, types: &[usize]) -> Self {
        let per_agent: Vec<f64> = totals.iter().map(|t| t / episodes as f64).collect();
        let n_types = types.iter().max().map_or(0, |m| m + 1);
        let per_type = (0..n_types)
            .map(|t| {
                let v: Vec<f64> = per_agent.iter().zip(types).filter(|(_, &ty)| ty == t).map(|(r, _)| *r).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        let mean = per_agent.iter().sum::<f64>() / per_agent.len() as f64;
        Self {
            episodes,
            per_agent,
            per_type,
            mean,
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn run_episodes(
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    mut act: impl FnMut(&Env, &[Vec<f64>]) -> Result<Vec<usize>>,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut totals = vec![0.0; spec.n_agents()];
    for ep in 0..episodes {
        let mut env = Env::new(&spec.with_seed(eval_env_seed(seed, ep)))?;
        let mut obs = env.reset();
        loop {
            let actions = act(&env, &obs)?;
            let step = env.step(&actions)?;
            for (t, r) in totals.iter_mut().zip(&step.rewards) {
                *t += r;
            }
            if step.done {
                break;
            }
            obs = step.observations;
        }
    }
    Ok(Evaluation::from_totals(totals, episodes, &spec.agent_types()))
}

/// Greedy (argmax) returns on evaluation seeds disjoint from training seeds.
pub fn evaluate(bindings: &Bindings, spec: &EnvSpec, episodes: usize, seed: u64) -> Result<Evaluation> {
    run_episodes(spec, episodes, seed, |_, obs| {
        obs.iter()
            .enumerate()
            .map(|(i, o)| Ok(argmax(&bindings.policy_forward(i, o)?)))
            .collect()
    })
}

/// Returns of the privileged BPS controller that walks straight to the landmark.
pub fn evaluate_oracle(spec: &EnvSpec, episodes: usize, seed: u64) -> Result<Evaluation> {
    run_episodes(spec, episodes, seed, |env, _| match env {
        Env::Bps(b) => Ok(b.oracle_actions()),
        Env::Lbf(_) => Err(Error::Config("the scripted oracle exists for BPS only".into())),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub strategy: StrategyKind,
    pub params: usize,
    pub relative: f64,
}

/// Trainable parameters of every strategy relative to FuPS.
pub fn size_report(arch: &Architecture, n_agents: usize, k: usize) -> Vec<SizeRow> {
    StrategyKind::ALL
        .iter()
        .map(|&s| SizeRow {
            strategy: s,
            params: crate::sharing::planned_param_count(s, arch, n_agents, k),
            relative: relative_model_size(s, arch, n_agents, k),
        })
        .collect()
}

pub fn size_report_csv(rows: &[SizeRow]) -> String {
    let mut s = String::from("strategy,params,relative_size\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.strategy, r.params, r.relative));
    }
    s
}

/// Identity vectors and their clustering for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutput {
    pub identities: Vec<IdentityVector>,
    pub clusters: ClusterModel,
    pub samples: usize,
}

fn pretrain_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.out.join("pretrain").join(format!("seed_{seed}"))
}

fn cluster_identities(cfg: &ExperimentConfig, identities: &[IdentityVector], seed: u64) -> Result<ClusterModel> {
    let points: Vec<Vec<f64>> = identities.iter().map(|i| i.z.clone()).collect();
    kmeans(&points, cfg.k(), seed).map_err(|e| e.in_stage("cluster"))
}

/// Runs the VAE stage and clustering for `seed`, writing the artifacts.
pub fn pretrain(cfg: &ExperimentConfig, seed: u64) -> Result<PretrainOutput> {
    let spec = cfg.env_spec();
    let vcfg = cfg.vae();
    let (identities, history) = (|| {
        let data = collect_pretraining_data(|s| Env::new(&spec.with_seed(s)), vcfg.samples, seed)?;
        let mut vae = Vae::new(spec.n_agents(), spec.obs_dim(), spec.action_dim(), &vcfg, seed)?;
        let history = train_vae(&mut vae, &data, &vcfg, seed)?;
        Ok((vae.identity_vectors(cfg.identity_mode(seed))?, history))
    })()
    .map_err(|e: Error| e.in_stage("pretrain"))?;
    let clusters = cluster_identities(cfg, &identities, seed)?;

    let dir = pretrain_dir(cfg, seed);
    (|| {
        fs::create_dir_all(&dir)?;
        save_identities(&dir.join("identities.txt"), &identities)?;
        let mut text = String::new();
        for (agent, c) in clusters.assignments.iter().enumerate() {
            text.push_str(&format!("{agent} {c}\n"));
        }
        fs::write(dir.join("clusters.txt"), text)?;
        let mut loss = String::from("epoch,loss\n");
        for (e, l) in history.iter().enumerate() {
            loss.push_str(&format!("{e},{l}\n"));
        }
        fs::write(dir.join("vae_loss.csv"), loss)?;
        Ok(())
    })()
    .map_err(|e: Error| e.in_stage("pretrain"))?;
    Ok(PretrainOutput {
        identities,
        clusters,
        samples: vcfg.samples,
    })
}

/// Reuses the identity file of an earlier run when present.
pub fn load_or_pretrain(cfg: &ExperimentConfig, seed: u64) -> Result<PretrainOutput> {
    let path = pretrain_dir(cfg, seed).join("identities.txt");
    if path.exists() {
        let identities = load_identities(&path).map_err(|e| e.in_stage("pretrain"))?;
        if identities.len() != cfg.env_spec().n_agents() {
            return Err(Error::Config(format!("{} holds {} agents", path.display(), identities.len())).in_stage("pretrain"));
        }
        let clusters = cluster_identities(cfg, &identities, seed)?;
        return Ok(PretrainOutput {
            identities,
            clusters,
            samples: cfg.vae_samples,
        });
    }
    pretrain(cfg, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: PathBuf,
    /// Greedy evaluation after training.
    pub evaluation: Evaluation,
    /// Mean return of the last training window with finished episodes.
    pub train_return: f64,
    pub relative_size: f64,
    pub pretrain_samples: usize,
    pub updates: Vec<usize>,
}

#[derive(Debug)]
pub struct RunFailure {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub seeds: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub relative_size: f64,
}

#[derive(Debug, Default)]
pub struct RunReport {
    pub entries: Vec<RunEntry>,
    pub failures: Vec<RunFailure>,
}

impl RunReport {
    pub fn entries_for(&self, kind: StrategyKind) -> Vec<&RunEntry> {
        self.entries.iter().filter(|e| e.strategy == kind).collect()
    }

    /// Final greedy returns aggregated over seeds.
    pub fn summary(&self, kind: StrategyKind) -> Option<StrategySummary> {
        let entries = self.entries_for(kind);
        if entries.is_empty() {
            return None;
        }
        let v: Vec<f64> = entries.iter().map(|e| e.evaluation.mean).collect();
        Some(StrategySummary {
            strategy: kind,
            seeds: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: sample_std(&v),
            relative_size: entries[0].relative_size,
        })
    }

    fn write(&self, cfg: &ExperimentConfig) -> Result<()> {
        let n_types = cfg.agents.len();
        let mut report = String::from("strategy,seed,status,final_return");
        for t in 0..n_types {
            report.push_str(&format!(",final_return_type_{t}"));
        }
        report.push_str(",train_return,relative_size,pretrain_samples,metrics\n");
        for e in &self.entries {
            report.push_str(&format!("{},{},ok,{}", e.strategy, e.seed, e.evaluation.mean));
            for r in &e.evaluation.per_type {
                report.push_str(&format!(",{r}"));
            }
            report.push_str(&format!(
                ",{},{},{},{}\n",
                e.train_return,
                e.relative_size,
                e.pretrain_samples,
                e.metrics.strip_prefix(&cfg.out).unwrap_or(&e.metrics).display()
            ));
        }
        for f in &self.failures {
            let stage = f.error.stage().unwrap_or("unknown");
            report.push_str(&format!("{},{},failed:{stage}", f.strategy, f.seed));
            report.push_str(&",".repeat(n_types + 5));
            report.push('\n');
        }
        fs::write(cfg.out.join("report.csv"), report)?;

        let mut summary = String::from("strategy,seeds,mean,min,max,std,relative_size\n");
        for &kind in &cfg.strategies {
            if let Some(s) = self.summary(kind) {
                summary.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    s.strategy, s.seeds, s.mean, s.min, s.max, s.std, s.relative_size
                ));
            }
        }
        fs::write(cfg.out.join("summary.csv"), summary)?;
        Ok(())
    }
}

fn run_dir(cfg: &ExperimentConfig, kind: StrategyKind, seed: u64) -> PathBuf {
    cfg.out.join(slug(kind)).join(format!("seed_{seed}"))
}

fn checkpoint_paths(dir: &Path, set: usize) -> (PathBuf, PathBuf) {
    let c = dir.join("checkpoints");
    (c.join(format!("set_{set}_actor.msl")), c.join(format!("set_{set}_critic.msl")))
}

fn snp_rate(cfg: &ExperimentConfig, seed: u64) -> Result<f64> {
    match cfg.snp_drop_rate {
        Some(p) => Ok(p),
        None => estimated_drop_fraction(cfg.latent_dim, &cfg.hidden, cfg.lambda, seed),
    }
}

/// Policies of one strategy and seed, before training.
pub fn prepare_bindings(
    cfg: &ExperimentConfig,
    kind: StrategyKind,
    seed: u64,
    pretrained: Option<&PretrainOutput>,
) -> Result<(Bindings, Option<MaskRegistry>)> {
    let arch = cfg.architecture();
    let n = cfg.env_spec().n_agents();
    let strategy = cfg.strategy(kind, seed, if kind == StrategyKind::SnpPs { snp_rate(cfg, seed)? } else { 0.0 });
    let mut registry = None;
    let pre = match (kind.needs_pretraining(), pretrained) {
        (false, _) => None,
        (true, None) => return Err(Error::Config(format!("{kind} needs pre-training output")).in_stage("pretrain")),
        (true, Some(p)) => {
            if let SharingStrategy::AdaPs { lambda, .. } = strategy {
                let (reg, _) = MaskRegistry::build_seeded(&p.clusters, cfg.latent_dim, lambda, &cfg.hidden, seed)
                    .map_err(|e| e.in_stage("masks"))?;
                registry = Some(reg);
            }
            Some(Pretrained {
                clusters: p.clusters.clone(),
                registry: registry.clone(),
            })
        }
    };
    let bindings = build_bindings(strategy, &arch, n, pre.as_ref(), seed, OptimizerSettings::default())
        .map_err(|e| e.in_stage("bindings"))?;
    Ok((bindings, registry))
}

fn write_masks(bindings: &Bindings, registry: Option<&MaskRegistry>, cfg: &ExperimentConfig, seed: u64, path: &Path) -> Result<()> {
    match (registry, bindings.masks.is_empty()) {
        (Some(reg), _) => reg.save(path),
        (None, false) => MaskRegistry::from_masks(cfg.lambda, seed, &cfg.hidden, bindings.masks.clone())?.save(path),
        (None, true) => Ok(()),
    }
}

/// Trains, checkpoints and evaluates one strategy for one seed.
pub fn run_one(
    cfg: &ExperimentConfig,
    kind: StrategyKind,
    seed: u64,
    pretrained: Option<&PretrainOutput>,
) -> Result<RunEntry> {
    let (mut bindings, registry) = prepare_bindings(cfg, kind, seed, pretrained)?;
    let dir = run_dir(cfg, kind, seed);
    let io = |e: Error| e.in_stage("artifacts");
    fs::create_dir_all(dir.join("checkpoints")).map_err(|e| io(e.into()))?;
    fs::write(dir.join("manifest.txt"), bindings.manifest()).map_err(|e| io(e.into()))?;
    write_masks(&bindings, registry.as_ref(), cfg, seed, &dir.join("masks.txt")).map_err(io)?;

    let spec = cfg.env_spec();
    let metrics = dir.join("metrics.csv");
    let summary = (|| {
        let file = std::io::BufWriter::new(fs::File::create(&metrics)?);
        let mut csv = MetricsCsv::new(file, spec.n_types())?;
        let label = kind.to_string();
        let summary = train(&cfg.trainer(seed), |s| Env::new(&spec.with_seed(s)), &mut bindings, &label, |row| {
            csv.write(row)
        })?;
        csv.flush()?;
        Ok(summary)
    })()
    .map_err(|e: Error| e.in_stage("train"))?;

    for (i, set) in bindings.store.sets.iter().enumerate() {
        let (a, c) = checkpoint_paths(&dir, i);
        save_checkpoint(&set.actor, &a).map_err(io)?;
        save_checkpoint(&set.critic, &c).map_err(io)?;
    }

    let evaluation = evaluate(&bindings, &spec, cfg.eval_episodes, seed).map_err(|e| e.in_stage("evaluate"))?;
    write_eval(&dir, &evaluation, &spec).map_err(io)?;

    let train_return = summary
        .rows
        .iter()
        .rev()
        .map(|r| r.mean_return)
        .find(|r| r.is_finite())
        .unwrap_or(f64::NAN);
    let n = spec.n_agents();
    Ok(RunEntry {
        strategy: kind,
        seed,
        dir,
        metrics,
        evaluation,
        train_return,
        relative_size: relative_model_size(kind, &cfg.architecture(), n, cfg.k()),
        pretrain_samples: if kind.needs_pretraining() { cfg.vae_samples } else { 0 },
        updates: bindings.store.sets.iter().map(|s| s.updates).collect(),
    })
}

fn write_eval(dir: &Path, ev: &Evaluation, spec: &EnvSpec) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join("eval.csv"))?);
    writeln!(f, "agent,type,return")?;
    for (i, (r, t)) in ev.per_agent.iter().zip(spec.agent_types()).enumerate() {
        writeln!(f, "{i},{t},{r}")?;
    }
    writeln!(f, "mean,,{}", ev.mean)?;
    f.flush()?;
    Ok(())
}

/// Rebuilds the trained policies of a finished run from its artifacts.
pub fn load_trained(cfg: &ExperimentConfig, kind: StrategyKind, seed: u64) -> Result<Bindings> {
    let dir = run_dir(cfg, kind, seed);
    let manifest = fs::read_to_string(dir.join("manifest.txt"))?;
    let mask_path = dir.join("masks.txt");
    let masks = if mask_path.exists() {
        MaskRegistry::load(&mask_path)?.masks().to_vec()
    } else {
        Vec::new()
    };
    let strategy = cfg.strategy(kind, seed, cfg.snp_drop_rate.unwrap_or(0.0));
    let mut bindings = Bindings::from_manifest(strategy, &cfg.architecture(), &manifest, masks, seed, OptimizerSettings::default())?;
    for (i, set) in bindings.store.sets.iter_mut().enumerate() {
        let (a, c) = checkpoint_paths(&dir, i);
        let actor = load_checkpoint(&a, Activation::Relu, Head::Softmax)?;
        let critic = load_checkpoint(&c, Activation::Relu, Head::Linear)?;
        if actor.sizes() != set.actor.sizes() || critic.sizes() != set.critic.sizes() {
            return Err(Error::Dimension(format!("checkpoint of set {i} does not match the config")));
        }
        set.actor = actor;
        set.critic = critic;
    }
    Ok(bindings)
}

/// Writes the config echo and size report and creates the output directory.
pub fn prepare_output(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
    let spec = cfg.env_spec();
    fs::write(
        cfg.out.join("size_report.csv"),
        size_report_csv(&size_report(&cfg.architecture(), spec.n_agents(), cfg.k())),
    )?;
    Ok(())
}

/// Runs the full pipeline. Stage failures of one run are recorded in the
/// report and do not stop the remaining runs.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    prepare_output(cfg).map_err(|e| e.in_stage("setup"))?;

    let needs_pretrain = cfg.strategies.iter().any(|s| s.needs_pretraining());
    let pretrained: Vec<Option<Result<PretrainOutput>>> = cfg
        .seeds
        .iter()
        .map(|&seed| needs_pretrain.then(|| load_or_pretrain(cfg, seed)))
        .collect();

    let jobs: Vec<(StrategyKind, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&k| (0..cfg.seeds.len()).map(move |s| (k, s)))
        .collect();
    let job = |&(kind, si): &(StrategyKind, usize)| -> (StrategyKind, u64, Result<RunEntry>) {
        let seed = cfg.seeds[si];
        let pre = match &pretrained[si] {
            Some(Err(e)) if kind.needs_pretraining() => {
                let stage = e.stage().unwrap_or("pretrain");
                return (kind, seed, Err(Error::Config(e.to_string()).in_stage(stage)));
            }
            Some(Ok(p)) => Some(p),
            _ => None,
        };
        (kind, seed, run_one(cfg, kind, seed, pre))
    };
    let results: Vec<_> = if cfg.parallel_jobs {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            jobs.par_iter().map(job).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            jobs.iter().map(job).collect()
        }
    } else {
        jobs.iter().map(job).collect()
    };

    let mut report = RunReport::default();
    for (strategy, seed, r) in results {
        match r {
            Ok(entry) => report.entries.push(entry),
            Err(error) => report.failures.push(RunFailure { strategy, seed, error }),
        }
    }
    report.write(cfg).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}

/// Greedy re-evaluation of every finished run found under `cfg.out`.
pub fn evaluate_saved(cfg: &ExperimentConfig) -> Result<Vec<(StrategyKind, u64, Evaluation)>> {
    let spec = cfg.env_spec();
    let mut out = Vec::new();
    for &kind in &cfg.strategies {
        for &seed in &cfg.seeds {
            let b = load_trained(cfg, kind, seed).map_err(|e| e.in_stage("load"))?;
            let ev = evaluate(&b, &spec, cfg.eval_episodes, seed).map_err(|e| e.in_stage("evaluate"))?;
            out.push((kind, seed, ev));
        }
    }
    Ok(out)
}
