use std::time::Instant;

use rand::Rng as _;

use super::{compute_nstep_targets, policy_loss_into, value_loss_into, MetricRow, PolicySample, TrainerConfig, ValueSample};
use crate::env::MultiAgentEnv;
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, rmsprop_step, Gradients, Trace};
use crate::rng::{self, Rng};
use crate::sharing::Bindings;

const SEED_SHIFT: u32 = 20;
const EVAL_BIT: u64 = 1 << (SEED_SHIFT - 1);

/// Seed of training environment instance `index`.
pub fn train_env_seed(seed: u64, index: usize) -> u64 {
    debug_assert!((index as u64) < EVAL_BIT);
    (seed << SEED_SHIFT) | index as u64
}

/// Seed of evaluation episode `episode`; never equal to a training seed.
pub fn eval_env_seed(seed: u64, episode: usize) -> u64 {
    (seed << SEED_SHIFT) | EVAL_BIT | (episode as u64 & (EVAL_BIT - 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub env_steps: usize,
    pub iterations: usize,
    pub episodes: usize,
    pub rows: Vec<MetricRow>,
}

struct Worker<E> {
    env: E,
    obs: Vec<Vec<f64>>,
    rng: Rng,
    returns: Vec<f64>,
}

#[derive(Default)]
struct Segment {
    /// `traces[t][agent]`, produced by the actor that chose the action.
    traces: Vec<Vec<Trace>>,
    actions: Vec<Vec<usize>>,
    rewards: Vec<Vec<f64>>,
    dones: Vec<bool>,
    /// Per-agent returns of episodes that ended in this segment.
    finished: Vec<Vec<f64>>,
}

fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let mut u: f64 = rng.random();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn rollout<E: MultiAgentEnv>(w: &mut Worker<E>, bindings: &Bindings, n_steps: usize) -> Result<Segment> {
    let n = bindings.n_agents();
    let mut seg = Segment::default();
    for _ in 0..n_steps {
        let mut traces = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for (agent, obs) in w.obs.iter().enumerate() {
            let h = bindings.handle(agent)?;
            let input = bindings.input(h, obs)?;
            let trace = bindings.set_of(h.actor_set)?.actor.forward(&input, bindings.mask_of(h)?)?;
            actions.push(sample_categorical(trace.output(), &mut w.rng));
            traces.push(trace);
        }
        let step = w.env.step(&actions)?;
        for (r, x) in w.returns.iter_mut().zip(&step.rewards) {
            *r += x;
        }
        if step.done {
            seg.finished.push(std::mem::replace(&mut w.returns, vec![0.0; n]));
            w.obs = w.env.reset();
        } else {
            w.obs = step.observations;
        }
        seg.traces.push(traces);
        seg.actions.push(actions);
        seg.rewards.push(step.rewards);
        seg.dones.push(step.done);
    }
    Ok(seg)
}

#[cfg(feature = "parallel")]
fn rollouts<E: MultiAgentEnv>(
    pool: &rayon::ThreadPool,
    workers: &mut [Worker<E>],
    bindings: &Bindings,
    n_steps: usize,
) -> Result<Vec<Segment>> {
    use rayon::prelude::*;
    pool.install(|| workers.par_iter_mut().map(|w| rollout(w, bindings, n_steps)).collect())
}

#[cfg(not(feature = "parallel"))]
fn rollouts<E: MultiAgentEnv>(workers: &mut [Worker<E>], bindings: &Bindings, n_steps: usize) -> Result<Vec<Segment>> {
    workers.iter_mut().map(|w| rollout(w, bindings, n_steps)).collect()
}

/// Losses of one update, averaged over samples.
struct UpdateStats {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
}

fn update<E: MultiAgentEnv>(
    cfg: &TrainerConfig,
    bindings: &mut Bindings,
    workers: &[Worker<E>],
    segments: &[Segment],
) -> Result<UpdateStats> {
    let n = bindings.n_agents();
    let steps = cfg.n_steps;

    // Targets per (env, t, agent).
    let mut targets = Vec::with_capacity(segments.len());
    for (w, seg) in workers.iter().zip(segments) {
        let last_done = *seg.dones.last().unwrap();
        let mut per_env = vec![vec![0.0; n]; steps];
        for agent in 0..n {
            let bootstrap = if last_done { 0.0 } else { bindings.value_forward(agent, &w.obs[agent])? };
            let rewards: Vec<f64> = seg.rewards.iter().map(|r| r[agent]).collect();
            let y = compute_nstep_targets(&rewards, &seg.dones, bootstrap, cfg.gamma);
            for t in 0..steps {
                per_env[t][agent] = y[t];
            }
        }
        targets.push(per_env);
    }

    let n_sets = bindings.store.len();
    let mut actor_grads = Vec::with_capacity(n_sets);
    let mut critic_grads = Vec::with_capacity(n_sets);
    let mut total_policy = 0.0;
    let mut total_value = 0.0;
    let mut total_entropy = 0.0;
    let mut total_samples = 0usize;
    for set in 0..n_sets {
        let params = bindings.set_of(set)?;

        let mut keys = Vec::new();
        for e in 0..segments.len() {
            for t in 0..steps {
                for agent in 0..n {
                    if bindings.handles[agent].actor_set == set {
                        keys.push((e, t, agent));
                    }
                }
            }
        }
        if keys.is_empty() {
            actor_grads.push(None);
            critic_grads.push(None);
            continue;
        }
        let scale = 1.0 / keys.len() as f64;
        let mut cg = Gradients::zeros_like(&params.critic);
        let value_batch: Vec<ValueSample<'_>> = keys
            .iter()
            .map(|&(e, t, agent)| {
                Ok(ValueSample {
                    input: segments[e].traces[t][agent].input(),
                    mask: bindings.mask_of(&bindings.handles[agent])?,
                    target: targets[e][t][agent],
                })
            })
            .collect::<Result<_>>()?;
        let (loss, values) = value_loss_into(&params.critic, &value_batch, scale, &mut cg)?;
        cg.scale(cfg.value_coef);
        total_value += loss * keys.len() as f64;

        let mut ag = Gradients::zeros_like(&params.actor);
        let policy_batch: Vec<PolicySample<'_>> = keys
            .iter()
            .zip(&values)
            .map(|(&(e, t, agent), v)| {
                Ok(PolicySample {
                    trace: &segments[e].traces[t][agent],
                    mask: bindings.mask_of(&bindings.handles[agent])?,
                    action: segments[e].actions[t][agent],
                    advantage: targets[e][t][agent] - v,
                })
            })
            .collect::<Result<_>>()?;
        let parts = policy_loss_into(&params.actor, &policy_batch, cfg.entropy_coef, scale, &mut ag)?;
        total_policy += parts.loss * keys.len() as f64;
        total_entropy += parts.entropy * keys.len() as f64;
        total_samples += keys.len();
        actor_grads.push(Some(ag));
        critic_grads.push(Some(cg));
    }

    for (set, (ag, cg)) in actor_grads.into_iter().zip(critic_grads).enumerate() {
        let (Some(mut ag), Some(mut cg)) = (ag, cg) else {
            continue;
        };
        clip_global_norm(&mut [&mut ag], cfg.max_grad_norm);
        clip_global_norm(&mut [&mut cg], cfg.max_grad_norm);
        let params = &mut bindings.store.sets[set];
        rmsprop_step(&mut params.actor, &ag, &mut params.actor_opt, cfg.lr)?;
        rmsprop_step(&mut params.critic, &cg, &mut params.critic_opt, cfg.lr)?;
        params.updates += 1;
    }

    let denom = total_samples.max(1) as f64;
    Ok(UpdateStats {
        policy_loss: total_policy / denom,
        value_loss: total_value / denom,
        entropy: total_entropy / denom,
    })
}

/// Trains `bindings` in place with synchronous n-step A2C.
///
/// `make_env` receives the seed of each environment instance. `on_row` is
/// called for every metric row as soon as it is produced.
pub fn train<E, F>(
    cfg: &TrainerConfig,
    make_env: F,
    bindings: &mut Bindings,
    label: &str,
    mut on_row: impl FnMut(&MetricRow) -> Result<()>,
) -> Result<TrainSummary>
where
    E: MultiAgentEnv,
    F: Fn(u64) -> Result<E>,
{
    cfg.validate()?;
    let start = Instant::now();
    let n = bindings.n_agents();
    if let Some(h) = bindings.handles.iter().find(|h| h.actor_set != h.critic_set) {
        return Err(Error::Contract(format!(
            "agent {} uses actor set {} but critic set {}",
            h.agent, h.actor_set, h.critic_set
        )));
    }
    let mut workers = Vec::with_capacity(cfg.num_envs);
    for e in 0..cfg.num_envs {
        let mut env = make_env(train_env_seed(cfg.seed, e))?;
        if env.n_agents() != n || env.obs_dim() != bindings.arch.obs_dim || env.action_dim() != bindings.arch.action_dim {
            return Err(Error::Dimension(format!(
                "environment has {} agents, obs {} and {} actions; policies expect {n}, {} and {}",
                env.n_agents(),
                env.obs_dim(),
                env.action_dim(),
                bindings.arch.obs_dim,
                bindings.arch.action_dim
            )));
        }
        let obs = env.reset();
        workers.push(Worker {
            env,
            obs,
            rng: rng::stream(cfg.seed, rng::STREAM_ACTIONS, e as u64),
            returns: vec![0.0; n],
        });
    }
    let types = workers[0].env.agent_types();
    let n_types = types.iter().max().map_or(0, |m| m + 1);

    #[cfg(feature = "parallel")]
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let mut summary = TrainSummary {
        env_steps: 0,
        iterations: 0,
        episodes: 0,
        rows: Vec::new(),
    };
    let mut next_row = cfg.eval_interval.min(cfg.total_steps);
    let mut window: Vec<Vec<f64>> = Vec::new();
    let mut stats_sum = (0.0, 0.0, 0.0, 0usize);
    while summary.env_steps < cfg.total_steps {
        #[cfg(feature = "parallel")]
        let segments = rollouts(&pool, &mut workers, bindings, cfg.n_steps)?;
        #[cfg(not(feature = "parallel"))]
        let segments = rollouts(&mut workers, bindings, cfg.n_steps)?;

        let stats = update(cfg, bindings, &workers, &segments)
            .map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("{msg} at env step {}", summary.env_steps)),
                other => other,
            })?;
        summary.iterations += 1;
        summary.env_steps += cfg.num_envs * cfg.n_steps;
        for seg in segments {
            summary.episodes += seg.finished.len();
            window.extend(seg.finished);
        }
        stats_sum.0 += stats.policy_loss;
        stats_sum.1 += stats.value_loss;
        stats_sum.2 += stats.entropy;
        stats_sum.3 += 1;

        let last = summary.env_steps >= cfg.total_steps;
        if summary.env_steps >= next_row || last {
            while next_row <= summary.env_steps {
                next_row += cfg.eval_interval;
            }
            let row = make_row(cfg, label, &types, n_types, &window, stats_sum, summary.env_steps, start);
            on_row(&row)?;
            summary.rows.push(row);
            window.clear();
            stats_sum = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn make_row(
    cfg: &TrainerConfig,
    label: &str,
    types: &[usize],
    n_types: usize,
    episodes: &[Vec<f64>],
    stats: (f64, f64, f64, usize),
    step: usize,
    start: Instant,
) -> MetricRow {
    let (mean_return, per_type_return) = episode_means(episodes, types, n_types);
    let k = stats.3.max(1) as f64;
    MetricRow {
        step,
        wall_ms: start.elapsed().as_millis(),
        strategy: label.to_string(),
        seed: cfg.seed,
        mean_return,
        per_type_return,
        policy_loss: stats.0 / k,
        value_loss: stats.1 / k,
        entropy: stats.2 / k,
    }
}

/// Mean per-agent return overall and per type; NaN without episodes.
pub(crate) fn episode_means(episodes: &[Vec<f64>], types: &[usize], n_types: usize) -> (f64, Vec<f64>) {
    if episodes.is_empty() {
        return (f64::NAN, vec![f64::NAN; n_types]);
    }
    let mut per_type = vec![0.0; n_types];
    let mut counts = vec![0usize; n_types];
    let mut total = 0.0;
    for ep in episodes {
        for (agent, &r) in ep.iter().enumerate() {
            per_type[types[agent]] += r;
            counts[types[agent]] += 1;
            total += r;
        }
    }
    let count: usize = counts.iter().sum();
    for (v, c) in per_type.iter_mut().zip(&counts) {
        *v = if *c > 0 { *v / *c as f64 } else { f64::NAN };
    }
    (total / count as f64, per_type)
}
