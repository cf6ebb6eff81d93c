//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! The learning criteria train on BPS 3-3-3 (200k steps) and LBF 2-2 (300k
//! steps) for four seeds each at learning rate 1e-3, so a full run takes a
//! while.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use maskshare::a2c::{compute_nstep_targets, policy_loss, value_loss, PolicySample, ValueSample};
use maskshare::cluster::{adjusted_rand_index, generate_mask, threshold_mask, MappingNetwork, MaskRegistry};
use maskshare::env::EnvKind;
use maskshare::harness::{self, load_trained, prepare_bindings, ExperimentConfig, PretrainOutput, RunReport};
use maskshare::nn::{Activation, Head, Mlp, NeuronMask, Trace};
use maskshare::rng;
use maskshare::sharing::StrategyKind;
use maskshare::vae::{gaussian_kl, TransitionSample, Vae, VaeConfig};
use rand::Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 4] = [0, 1, 2, 3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// 1. model sizes

fn model_sizes() -> Outcome {
    let cfg = ExperimentConfig::for_env(EnvKind::Bps, &[10, 10, 10]);
    let rows = harness::size_report(&cfg.architecture(), cfg.env_spec().n_agents(), 3);
    let rel = |k| rows.iter().find(|r| r.strategy == k).map(|r| r.relative).unwrap_or(f64::NAN);
    let (no, se, ada) = (rel(StrategyKind::NoPs), rel(StrategyKind::SePs), rel(StrategyKind::AdaPs));
    outcome(
        no == 30.0 && se == 3.0 && ada == 1.0,
        format!("NoPS {no}, SePS {se}, AdaPS {ada} (relative to FuPS)"),
    )
}

// 2. identity recovery

fn identity_recovery(cfg: &ExperimentConfig) -> (Outcome, Vec<PretrainOutput>) {
    let types = cfg.env_spec().agent_types();
    let mut outputs = Vec::new();
    let mut aris = Vec::new();
    for &seed in &SEEDS {
        match harness::pretrain(cfg, seed) {
            Ok(p) => {
                aris.push(adjusted_rand_index(&p.clusters.assignments, &types));
                outputs.push(p);
            }
            Err(e) => return (outcome(false, format!("seed {seed}: {e}")), outputs),
        }
    }
    let good = aris.iter().filter(|&&a| a >= 0.9).count();
    let shown: Vec<String> = aris.iter().map(|a| format!("{a:.3}")).collect();
    (outcome(good >= 3, format!("ARI per seed [{}], {good}/4 >= 0.9", shown.join(", "))), outputs)
}

// 3 and 4. learning orderings

fn summary_line(report: &RunReport, kind: StrategyKind) -> (f64, f64, String) {
    match report.summary(kind) {
        Some(s) => (s.mean, s.std, format!("{kind} {:.3}±{:.3}", s.mean, s.std)),
        None => (f64::NAN, f64::NAN, format!("{kind} missing")),
    }
}

fn failures(report: &RunReport) -> String {
    report
        .failures
        .iter()
        .map(|f| format!("; {} seed {} failed: {}", f.strategy, f.seed, f.error))
        .collect()
}

fn differentiation(cfg: &ExperimentConfig) -> (Outcome, Option<RunReport>) {
    let report = match harness::run(cfg) {
        Ok(r) => r,
        Err(e) => return (outcome(false, e.to_string()), None),
    };
    let (ada, ada_sd, a) = summary_line(&report, StrategyKind::AdaPs);
    let (fu, fu_sd, f) = summary_line(&report, StrategyKind::FuPs);
    let (no, no_sd, n) = summary_line(&report, StrategyKind::NoPs);
    let pass = ada - fu > ada_sd.max(fu_sd) && no - fu > no_sd.max(fu_sd);
    let detail = format!("{a}, {f}, {n}; margins AdaPS-FuPS {:.3}, NoPS-FuPS {:.3}{}", ada - fu, no - fu, failures(&report));
    (outcome(pass, detail), Some(report))
}

fn experience_sharing(cfg: &ExperimentConfig) -> Outcome {
    let report = match harness::run(cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (ada, ada_sd, a) = summary_line(&report, StrategyKind::AdaPs);
    let (se, se_sd, s) = summary_line(&report, StrategyKind::SePs);
    let (no, no_sd, n) = summary_line(&report, StrategyKind::NoPs);
    let pass = ada >= se - ada_sd.max(se_sd) && ada >= no - ada_sd.max(no_sd);
    let mut per_type = String::new();
    for &k in &cfg.strategies {
        let entries = report.entries_for(k);
        if entries.is_empty() {
            continue;
        }
        let types = entries[0].evaluation.per_type.len();
        let means: Vec<String> = (0..types)
            .map(|t| entries.iter().map(|e| e.evaluation.per_type[t]).sum::<f64>() / entries.len() as f64)
            .map(|v| format!("{v:.3}"))
            .collect();
        let train = entries.iter().map(|e| e.train_return).sum::<f64>() / entries.len() as f64;
        per_type.push_str(&format!("; {k} per type [{}], last training window {train:.3}", means.join(", ")));
    }
    outcome(pass, format!("{a}, {s}, {n}{per_type}{}", failures(&report)))
}

// 5. mask mechanics

fn mask_mechanics(cfg: &ExperimentConfig, pretrained: &[PretrainOutput], mapping_before: &[u8]) -> Outcome {
    let hidden = &cfg.hidden;
    let mut r = rng::stream(1234, 0, 0);
    let map = match MappingNetwork::new(cfg.latent_dim, hidden, 77) {
        Ok(m) => m,
        Err(e) => return outcome(false, e.to_string()),
    };
    let twin = MappingNetwork::new(cfg.latent_dim, hidden, 77).unwrap();
    let (mut monotone, mut ones, mut pure) = (true, true, true);
    for _ in 0..100 {
        let center: Vec<f64> = (0..cfg.latent_dim).map(|_| r.random_range(-3.0..3.0)).collect();
        let probs = map.probabilities(&center).unwrap();
        let mut lambdas = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        lambdas.sort_by(f64::total_cmp);
        let lo = threshold_mask(&probs, lambdas[0], hidden).unwrap();
        let hi = threshold_mask(&probs, lambdas[1], hidden).unwrap();
        monotone &= hi.is_subset_of(&lo);
        ones &= threshold_mask(&probs, 0.0, hidden).unwrap().active_count() == lo.total();
        let again = threshold_mask(&map.probabilities(&center).unwrap(), lambdas[0], hidden).unwrap();
        let other = threshold_mask(&twin.probabilities(&center).unwrap(), lambdas[0], hidden).unwrap();
        pure &= again == lo && other == lo;
        if let (Ok(a), Ok(b)) = (generate_mask(&map, &center, 0.2, hidden), generate_mask(&map, &center, 0.2, hidden)) {
            pure &= a == b;
        }
    }

    // The mapping network behind the trained AdaPS masks is untouched by training.
    let mut frozen = true;
    for (seed, p) in SEEDS.iter().zip(pretrained) {
        let path = cfg.out.join("adaps").join(format!("seed_{seed}")).join("masks.txt");
        let Ok(saved) = MaskRegistry::load(&path) else {
            frozen = false;
            continue;
        };
        let after = MappingNetwork::new(cfg.latent_dim, hidden, saved.seed()).unwrap();
        let rebuilt = MaskRegistry::build(&p.clusters, &after, cfg.lambda, hidden).unwrap();
        frozen &= rebuilt.masks() == saved.masks();
        if *seed == 0 {
            frozen &= after.to_bytes() == mapping_before;
        }
    }
    outcome(
        monotone && ones && pure && frozen,
        format!("monotone {monotone}, lambda=0 all ones {ones}, pure {pure}, mapping frozen {frozen} (100 centers)"),
    )
}

// 6. numerics

fn nudge(net: &Mlp, i: usize, h: f64) -> Mlp {
    let mut p = net.clone();
    let mut flat = p.flat_params();
    flat[i] += h;
    p.set_flat_params(&flat).unwrap();
    p
}

#[derive(Default)]
struct FdStats {
    instances: usize,
    checked: usize,
    kinks: usize,
    worst: f64,
}

impl FdStats {
    /// Central difference against `analytic[i]`; parameters whose one-sided
    /// slopes disagree sit on a ReLU kink and are counted separately.
    fn check(&mut self, analytic: &[f64], loss: impl Fn(usize, f64) -> f64) {
        let h = 1e-6;
        self.instances += 1;
        for (i, &g) in analytic.iter().enumerate() {
            let (up, mid, down) = (loss(i, h), loss(i, 0.0), loss(i, -h));
            let (fwd, bwd) = ((up - mid) / h, (mid - down) / h);
            if (fwd - bwd).abs() > 1e-2 * fwd.abs().max(bwd.abs()).max(1e-2) {
                self.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-4);
            self.worst = self.worst.max(rel);
            self.checked += 1;
        }
    }

    fn ok(&self) -> bool {
        self.instances >= 100 && self.worst <= 1e-5 && self.kinks * 100 <= self.checked
    }

    fn describe(&self, name: &str) -> String {
        format!(
            "{name}: {} instances, {} params, worst rel err {:.1e}, {} kinks skipped",
            self.instances, self.checked, self.worst, self.kinks
        )
    }
}

fn random_hidden(r: &mut impl Rng) -> Vec<usize> {
    (0..r.random_range(1..=2)).map(|_| r.random_range(2..=7)).collect()
}

fn random_sizes(r: &mut impl Rng, input: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(random_hidden(r));
    sizes.push(output);
    sizes
}

fn random_mask(r: &mut impl Rng, hidden: &[usize]) -> NeuronMask {
    NeuronMask::new(
        hidden
            .iter()
            .map(|&n| {
                let keep = r.random_range(0..n);
                (0..n).map(|j| j == keep || r.random_bool(0.6)).collect()
            })
            .collect(),
    )
}

fn random_activation(r: &mut impl Rng) -> Activation {
    if r.random_bool(0.5) {
        Activation::Relu
    } else {
        Activation::Tanh
    }
}

fn vec_in(r: &mut impl Rng, n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-span..span)).collect()
}

fn policy_fd(r: &mut impl Rng, stats: &mut FdStats) {
    let (obs, actions) = (r.random_range(2..=6), r.random_range(2..=5));
    let sizes = random_sizes(r, obs, actions);
    let actor = Mlp::new(&sizes, random_activation(r), Head::Softmax, r).unwrap();
    let mask = r.random_bool(0.5).then(|| random_mask(r, &sizes[1..sizes.len() - 1]));
    let n = r.random_range(1..=6);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| vec_in(r, obs, 1.5)).collect();
    let acts: Vec<usize> = (0..n).map(|_| r.random_range(0..actions)).collect();
    let adv = vec_in(r, n, 2.0);
    let c = r.random_range(0.0..0.1);
    let loss = |net: &Mlp| {
        let traces: Vec<Trace> = inputs.iter().map(|x| net.forward(x, mask.as_ref()).unwrap()).collect();
        let batch: Vec<PolicySample<'_>> = traces
            .iter()
            .zip(&acts)
            .zip(&adv)
            .map(|((t, &a), &v)| PolicySample { trace: t, mask: mask.as_ref(), action: a, advantage: v })
            .collect();
        policy_loss(net, &batch, c).unwrap()
    };
    let analytic = loss(&actor).1.flat();
    stats.check(&analytic, |i, h| loss(&nudge(&actor, i, h)).0.loss);
}

fn value_fd(r: &mut impl Rng, stats: &mut FdStats) {
    let obs = r.random_range(2..=6);
    let sizes = random_sizes(r, obs, 1);
    let critic = Mlp::new(&sizes, random_activation(r), Head::Linear, r).unwrap();
    let mask = r.random_bool(0.5).then(|| random_mask(r, &sizes[1..sizes.len() - 1]));
    let n = r.random_range(1..=6);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| vec_in(r, obs, 1.5)).collect();
    let targets = vec_in(r, n, 3.0);
    let loss = |net: &Mlp| {
        let batch: Vec<ValueSample<'_>> = inputs
            .iter()
            .zip(&targets)
            .map(|(x, &y)| ValueSample { input: x, mask: mask.as_ref(), target: y })
            .collect();
        value_loss(net, &batch).unwrap()
    };
    let analytic = loss(&critic).1.flat();
    stats.check(&analytic, |i, h| loss(&nudge(&critic, i, h)).0);
}

fn elbo_fd(r: &mut impl Rng, stats: &mut FdStats) {
    let (agents, obs, actions) = (r.random_range(2..=5), r.random_range(1..=4), r.random_range(2..=4));
    let latent = r.random_range(1..=3);
    let cfg = VaeConfig {
        latent_dim: latent,
        encoder_hidden: random_hidden(r),
        decoder_hidden: random_hidden(r),
        ..Default::default()
    };
    let vae = Vae::new(agents, obs, actions, &cfg, r.random()).unwrap();
    let n = r.random_range(1..=6);
    let data: Vec<TransitionSample> = (0..n)
        .map(|_| TransitionSample {
            agent: r.random_range(0..agents),
            obs: vec_in(r, obs, 1.0),
            action: r.random_range(0..actions),
            reward: r.random_range(-1.0..1.0),
            next_obs: vec_in(r, obs, 1.0),
        })
        .collect();
    let batch: Vec<&TransitionSample> = data.iter().collect();
    let eps: Vec<Vec<f64>> = (0..n).map(|_| (0..latent).map(|_| r.sample(StandardNormal)).collect()).collect();
    let w = r.random_range(0.0..2.0);
    let (_, ge, gd) = vae.elbo_loss(&batch, &eps, w).unwrap();
    let mut analytic = ge.flat();
    let enc_len = analytic.len();
    analytic.extend(gd.flat());
    stats.check(&analytic, |i, h| {
        let mut v = vae.clone();
        if i < enc_len {
            v.encoder = nudge(&vae.encoder, i, h);
        } else {
            v.decoder = nudge(&vae.decoder, i - enc_len, h);
        }
        v.elbo_loss(&batch, &eps, w).unwrap().0.loss
    });
}

fn brute_force_targets(rewards: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut sum = 0.0;
            let mut discount = 1.0;
            for k in t..rewards.len() {
                sum += discount * rewards[k];
                if dones[k] {
                    return sum;
                }
                discount *= gamma;
            }
            sum + discount * bootstrap
        })
        .collect()
}

fn numerics() -> Outcome {
    let mut r = rng::stream(2024, 0, 0);
    let (mut pol, mut val, mut elbo) = (FdStats::default(), FdStats::default(), FdStats::default());
    for _ in 0..100 {
        policy_fd(&mut r, &mut pol);
        value_fd(&mut r, &mut val);
        elbo_fd(&mut r, &mut elbo);
    }
    let mut nstep_worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(1..=12);
        let rewards = vec_in(&mut r, n, 5.0);
        let dones: Vec<bool> = (0..n).map(|_| r.random_bool(0.2)).collect();
        let bootstrap = r.random_range(-10.0..10.0);
        let gamma = r.random_range(0.0..1.0);
        let got = compute_nstep_targets(&rewards, &dones, bootstrap, gamma);
        for (a, b) in got.iter().zip(brute_force_targets(&rewards, &dones, bootstrap, gamma)) {
            nstep_worst = nstep_worst.max((a - b).abs());
        }
    }
    let kl = gaussian_kl(&[1.0, 0.0], &[0.0, 0.0]);
    let pass = pol.ok() && val.ok() && elbo.ok() && nstep_worst <= 1e-12 && (kl - 0.5).abs() <= 1e-12;
    outcome(
        pass,
        format!(
            "{}; {}; {}; n-step max abs err {nstep_worst:.1e} over 1000 sequences; KL {kl}",
            pol.describe("policy"),
            val.describe("value"),
            elbo.describe("ELBO")
        ),
    )
}

// 7. mask respect

fn mask_respect(cfg: &ExperimentConfig, pretrained: &PretrainOutput) -> Outcome {
    let seed = SEEDS[0];
    let (init, registry) = match prepare_bindings(cfg, StrategyKind::AdaPs, seed, Some(pretrained)) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let trained = match load_trained(cfg, StrategyKind::AdaPs, seed) {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let Some(registry) = registry else {
        return outcome(false, "AdaPS built no masks");
    };
    let masks = registry.masks();
    let (mut dead, mut compared, mut moved) = (0, 0, 0);
    let mut live_moved = false;
    for (a, b) in init.store.sets.iter().zip(&trained.store.sets) {
        for (net0, net1) in [(&a.actor, &b.actor), (&a.critic, &b.critic)] {
            for (l, width) in cfg.hidden.iter().enumerate() {
                let (in0, in1) = (&net0.layers()[l], &net1.layers()[l]);
                let (out0, out1) = (&net0.layers()[l + 1], &net1.layers()[l + 1]);
                for j in 0..*width {
                    let is_dead = masks.iter().all(|m| !m.layer(l)[j]);
                    let mut same = in0.row(j).iter().zip(in1.row(j)).all(|(x, y)| x.to_bits() == y.to_bits());
                    same &= in0.biases[j].to_bits() == in1.biases[j].to_bits();
                    same &= (0..out0.outputs).all(|o| out0.weight(o, j).to_bits() == out1.weight(o, j).to_bits());
                    if is_dead {
                        dead += 1;
                        compared += in0.inputs + 1 + out0.outputs;
                        if !same {
                            moved += 1;
                        }
                    } else {
                        live_moved |= !same;
                    }
                }
            }
        }
    }
    outcome(
        dead > 0 && moved == 0 && live_moved,
        format!("{dead} dead neurons across actor and critic, {compared} incident parameters compared, {moved} moved; live neurons trained {live_moved}"),
    )
}

// 8. determinism

fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(1);
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism(root: &Path) -> Outcome {
    let mut cfg = ExperimentConfig::for_env(EnvKind::Bps, &[3, 3, 3]);
    cfg.strategies = StrategyKind::ALL.to_vec();
    cfg.seeds = vec![0, 1];
    cfg.steps = 20_000;
    cfg.eval_interval = 5_000;
    cfg.vae_samples = 5_000;
    cfg.vae_epochs = 5;
    let mut csvs = Vec::new();
    for rep in ["a", "b"] {
        cfg.out = root.join(rep);
        let report = match harness::run(&cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, e.to_string()),
        };
        if !report.failures.is_empty() {
            return outcome(false, failures(&report));
        }
        let mut files = Vec::new();
        for e in &report.entries {
            files.push(strip_wall_clock(&fs::read_to_string(&e.metrics).unwrap()));
            files.push(fs::read_to_string(e.dir.join("eval.csv")).unwrap());
        }
        files.push(fs::read_to_string(cfg.out.join("report.csv")).unwrap());
        csvs.push(files);
    }
    let same = csvs[0] == csvs[1];
    outcome(
        same,
        format!("{} strategies x 2 seeds, {} CSV files compared, identical {same}", cfg.strategies.len(), csvs[0].len()),
    )
}

fn main() -> ExitCode {
    let root = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut record = |n: usize, name: &'static str, started: Instant, o: Outcome| {
        let secs = started.elapsed().as_secs_f64();
        println!("criterion {n} {}: {name}: {} ({secs:.0} s)", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o, secs));
    };

    let t = Instant::now();
    record(1, "model-size ratios", t, model_sizes());

    let mut bps = ExperimentConfig::for_env(EnvKind::Bps, &[3, 3, 3]);
    bps.strategies = vec![StrategyKind::AdaPs, StrategyKind::FuPs, StrategyKind::NoPs];
    bps.seeds = SEEDS.to_vec();
    bps.steps = 200_000;
    bps.lr = 1e-3;
    bps.clusters = Some(3);
    bps.out = root.path().join("bps");

    let t = Instant::now();
    let (o, pretrained) = identity_recovery(&bps);
    record(2, "identity recovery", t, o);

    let mapping_before = pretrained
        .first()
        .and_then(|p| MaskRegistry::build_seeded(&p.clusters, bps.latent_dim, bps.lambda, &bps.hidden, 0).ok())
        .map(|(_, map)| map.to_bytes())
        .unwrap_or_default();

    let t = Instant::now();
    let (o, report) = differentiation(&bps);
    record(3, "differentiation ordering (BPS 3-3-3)", t, o);

    let mut lbf = ExperimentConfig::for_env(EnvKind::Lbf, &[2, 2]);
    lbf.strategies = vec![StrategyKind::AdaPs, StrategyKind::SePs, StrategyKind::NoPs];
    lbf.seeds = SEEDS.to_vec();
    lbf.steps = 300_000;
    lbf.lr = 1e-3;
    lbf.out = root.path().join("lbf");
    let t = Instant::now();
    record(4, "experience-sharing ordering (LBF 2-2)", t, experience_sharing(&lbf));

    let t = Instant::now();
    record(5, "mask mechanics", t, mask_mechanics(&bps, &pretrained, &mapping_before));

    let t = Instant::now();
    record(6, "numerical correctness", t, numerics());

    let t = Instant::now();
    let o = match (report, pretrained.first()) {
        (Some(_), Some(p)) => mask_respect(&bps, p),
        _ => outcome(false, "AdaPS run unavailable"),
    };
    record(7, "mask respect after training", t, o);

    let t = Instant::now();
    record(8, "determinism", t, determinism(&root.path().join("det")));

    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} acceptance criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
