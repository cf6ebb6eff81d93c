use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskshare::cluster::{adjusted_rand_index, silhouette};
use maskshare::env::EnvKind;
use maskshare::harness::{self, ExperimentConfig, RunReport};
use maskshare::{Error, Result};

/// Adaptive parameter sharing experiments for multi-agent actor-critic.
#[derive(Parser)]
#[command(name = "maskshare", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train identity encoders and cluster agents for every seed.
    Pretrain(Opts),
    /// Train every strategy and seed, reusing pre-training output when present.
    Train(Opts),
    /// Greedy re-evaluation of finished runs.
    Evaluate {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Parameter counts of all strategies relative to full sharing.
    SizeReport(Opts),
    /// Fresh pre-training followed by training, evaluation and reporting.
    All(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvKind>,
    /// Agents per type, e.g. 3,3,3.
    #[arg(long)]
    agents: Option<String>,
    /// Strategy names, e.g. AdaPS,FuPS,NoPS.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config entry, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Opts {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_text(&std::fs::read_to_string(path)?)?,
            None => {
                let env = self.env.unwrap_or(EnvKind::Bps);
                let agents: Vec<usize> = match &self.agents {
                    Some(a) => a
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("bad agent count {v:?}"))))
                        .collect::<Result<_>>()?,
                    None => ExperimentConfig::default().agents,
                };
                ExperimentConfig::for_env(env, &agents)
            }
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        if let Some(e) = self.env {
            overrides.push(("env".into(), e.to_string()));
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.into(), v));
            }
        };
        put("agents", self.agents.clone());
        put("strategies", self.strategy.clone());
        put("clusters", self.clusters.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("seeds", self.seeds.clone());
        put("steps", self.steps.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            overrides.push((k.trim().into(), v.trim().into()));
        }
        for (k, v) in overrides {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pretrain_all(cfg: &ExperimentConfig) -> Result<()> {
    harness::prepare_output(cfg).map_err(|e| e.in_stage("setup"))?;
    let types = cfg.env_spec().agent_types();
    println!("seed,ari,silhouette");
    for &seed in &cfg.seeds {
        let p = harness::pretrain(cfg, seed)?;
        let points: Vec<Vec<f64>> = p.identities.iter().map(|i| i.z.clone()).collect();
        println!(
            "{seed},{:.4},{:.4}",
            adjusted_rand_index(&p.clusters.assignments, &types),
            silhouette(&points, &types)
        );
    }
    Ok(())
}

fn print_report(cfg: &ExperimentConfig, report: &RunReport) -> Result<()> {
    println!("strategy,seeds,mean,min,max,std,relative_size");
    for &k in &cfg.strategies {
        if let Some(s) = report.summary(k) {
            println!(
                "{},{},{:.4},{:.4},{:.4},{:.4},{}",
                s.strategy, s.seeds, s.mean, s.min, s.max, s.std, s.relative_size
            );
        }
    }
    if let Some(first) = report.failures.first() {
        for f in &report.failures {
            eprintln!("{} seed {}: {}", f.strategy, f.seed, f.error);
        }
        return Err(Error::Config(format!("{} run(s) failed", report.failures.len()))
            .in_stage(first.error.stage().unwrap_or("train")));
    }
    println!("results written to {}", cfg.out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(opts) => pretrain_all(&opts.config().map_err(|e| e.in_stage("config"))?),
        Command::Train(opts) => {
            let cfg = opts.config().map_err(|e| e.in_stage("config"))?;
            print_report(&cfg, &harness::run(&cfg)?)
        }
        Command::All(opts) => {
            let cfg = opts.config().map_err(|e| e.in_stage("config"))?;
            if cfg.strategies.iter().any(|s| s.needs_pretraining()) {
                for &seed in &cfg.seeds {
                    harness::pretrain(&cfg, seed)?;
                }
            }
            print_report(&cfg, &harness::run(&cfg)?)
        }
        Command::Evaluate { opts, episodes } => {
            let mut cfg = opts.config().map_err(|e| e.in_stage("config"))?;
            if let Some(n) = episodes {
                cfg.eval_episodes = n;
                cfg.validate().map_err(|e| e.in_stage("config"))?;
            }
            println!("strategy,seed,mean_return");
            for (k, seed, ev) in harness::evaluate_saved(&cfg)? {
                println!("{k},{seed},{:.4}", ev.mean);
            }
            Ok(())
        }
        Command::SizeReport(opts) => {
            let cfg = opts.config().map_err(|e| e.in_stage("config"))?;
            let rows = harness::size_report(&cfg.architecture(), cfg.env_spec().n_agents(), cfg.k());
            print!("{}", harness::size_report_csv(&rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("maskshare: {}", e.in_stage("run"));
            ExitCode::FAILURE
        }
    }
}
