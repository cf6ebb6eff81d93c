//! Parameter-sharing strategies.
//!
//! Every strategy reduces to a [`ParameterStore`] of trainable actor/critic
//! pairs, an optional table of neuron masks, and one [`PolicyHandle`] per agent
//! naming the pair, the mask and the input augmentation it uses.
//!
//! | strategy | parameter sets | masks                         | input        |
//! |----------|----------------|-------------------------------|--------------|
//! | NoPS     | N              | none                          | observation  |
//! | FuPS     | 1              | none                          | observation  |
//! | FuPS+id  | 1              | none                          | obs ++ one-hot agent id |
//! | SePS     | K (one per cluster) | none                     | observation  |
//! | SNP-PS   | 1              | N random Bernoulli masks      | observation  |
//! | AdaPS    | 1              | K masks from the mapping network | observation |

use std::borrow::Cow;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng as _;

use crate::cluster::{ClusterModel, MaskRegistry};
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Head, Mlp, NeuronMask, RmsProp};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SharingStrategy {
    NoPs,
    FuPs,
    FuPsId,
    SePs { k: usize },
    SnpPs { drop_rate: f64, seed: u64 },
    AdaPs { k: usize, lambda: f64 },
}

/// Strategy name without parameters, as used in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    NoPs,
    FuPs,
    FuPsId,
    SePs,
    SnpPs,
    AdaPs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::NoPs,
        StrategyKind::FuPs,
        StrategyKind::FuPsId,
        StrategyKind::SePs,
        StrategyKind::SnpPs,
        StrategyKind::AdaPs,
    ];

    /// Whether the strategy consumes identity vectors / clusters.
    pub fn needs_pretraining(self) -> bool {
        matches!(self, StrategyKind::SePs | StrategyKind::AdaPs)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::NoPs => "NoPS",
            StrategyKind::FuPs => "FuPS",
            StrategyKind::FuPsId => "FuPS+id",
            StrategyKind::SePs => "SePS",
            StrategyKind::SnpPs => "SNP-PS",
            StrategyKind::AdaPs => "AdaPS",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        match key.as_str() {
            "nops" => Ok(StrategyKind::NoPs),
            "fups" => Ok(StrategyKind::FuPs),
            "fupsid" => Ok(StrategyKind::FuPsId),
            "seps" => Ok(StrategyKind::SePs),
            "snpps" => Ok(StrategyKind::SnpPs),
            "adaps" => Ok(StrategyKind::AdaPs),
            _ => Err(Error::Parse(format!("unknown sharing strategy {s:?}"))),
        }
    }
}

impl SharingStrategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            SharingStrategy::NoPs => StrategyKind::NoPs,
            SharingStrategy::FuPs => StrategyKind::FuPs,
            SharingStrategy::FuPsId => StrategyKind::FuPsId,
            SharingStrategy::SePs { .. } => StrategyKind::SePs,
            SharingStrategy::SnpPs { .. } => StrategyKind::SnpPs,
            SharingStrategy::AdaPs { .. } => StrategyKind::AdaPs,
        }
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        match *self {
            SharingStrategy::SePs { k } | SharingStrategy::AdaPs { k, .. } if k == 0 || k >= n_agents => {
                Err(Error::Config(format!("{} needs 1 <= K < N, got K = {k}, N = {n_agents}", self.kind())))
            }
            SharingStrategy::AdaPs { lambda, .. } if !(0.0..1.0).contains(&lambda) => {
                Err(Error::Config(format!("λ must lie in [0, 1), got {lambda}")))
            }
            SharingStrategy::SnpPs { drop_rate, .. } if !(0.0..1.0).contains(&drop_rate) => {
                Err(Error::Config(format!("drop rate must lie in [0, 1), got {drop_rate}")))
            }
            _ => Ok(()),
        }
    }
}

/// Network shapes shared by every parameter set of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        Self {
            obs_dim,
            action_dim,
            hidden: hidden.to_vec(),
            activation: Activation::Relu,
        }
    }

    pub fn actor_sizes(&self, extra_inputs: usize) -> Vec<usize> {
        let mut s = vec![self.obs_dim + extra_inputs];
        s.extend(&self.hidden);
        s.push(self.action_dim);
        s
    }

    pub fn critic_sizes(&self, extra_inputs: usize) -> Vec<usize> {
        let mut s = vec![self.obs_dim + extra_inputs];
        s.extend(&self.hidden);
        s.push(1);
        s
    }

    /// Trainable parameters of one actor/critic pair.
    pub fn pair_params(&self, extra_inputs: usize) -> usize {
        nn::param_count(&self.actor_sizes(extra_inputs)) + nn::param_count(&self.critic_sizes(extra_inputs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    None,
    /// Observation followed by a one-hot agent index of length `n_agents`.
    OneHotAgent { n_agents: usize },
}

impl Augmentation {
    pub fn extra_inputs(self) -> usize {
        match self {
            Augmentation::None => 0,
            Augmentation::OneHotAgent { n_agents } => n_agents,
        }
    }
}

/// Binding of one agent to its networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHandle {
    pub agent: usize,
    pub actor_set: usize,
    pub critic_set: usize,
    pub mask: Option<usize>,
    pub augmentation: Augmentation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            decay: 0.99,
            epsilon: 1e-5,
        }
    }
}

/// One trainable actor/critic pair with its optimizer state.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: RmsProp,
    pub critic_opt: RmsProp,
    /// Optimizer steps applied so far.
    pub updates: usize,
}

impl ParameterSet {
    pub fn new(arch: &Architecture, extra_inputs: usize, set: usize, seed: u64, opt: OptimizerSettings) -> Result<Self> {
        let actor = Mlp::new(
            &arch.actor_sizes(extra_inputs),
            arch.activation,
            Head::Softmax,
            &mut rng::stream(seed, rng::STREAM_INIT, 2 * set as u64),
        )?;
        let critic = Mlp::new(
            &arch.critic_sizes(extra_inputs),
            arch.activation,
            Head::Linear,
            &mut rng::stream(seed, rng::STREAM_INIT, 2 * set as u64 + 1),
        )?;
        Ok(Self {
            actor_opt: RmsProp::new(&actor, opt.decay, opt.epsilon),
            critic_opt: RmsProp::new(&critic, opt.decay, opt.epsilon),
            actor,
            critic,
            updates: 0,
        })
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.critic.param_count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    pub sets: Vec<ParameterSet>,
}

impl ParameterStore {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn total_trainable_params(store: &ParameterStore) -> usize {
    store.sets.iter().map(ParameterSet::param_count).sum()
}

/// Trainable parameters a strategy will allocate, without building networks.
pub fn planned_param_count(kind: StrategyKind, arch: &Architecture, n_agents: usize, k: usize) -> usize {
    match kind {
        StrategyKind::NoPs => n_agents * arch.pair_params(0),
        StrategyKind::FuPs | StrategyKind::SnpPs | StrategyKind::AdaPs => arch.pair_params(0),
        StrategyKind::FuPsId => arch.pair_params(n_agents),
        StrategyKind::SePs => k * arch.pair_params(0),
    }
}

/// Trainable size relative to FuPS on the same architecture.
pub fn relative_model_size(kind: StrategyKind, arch: &Architecture, n_agents: usize, k: usize) -> f64 {
    planned_param_count(kind, arch, n_agents, k) as f64 / arch.pair_params(0) as f64
}

/// Clustering products consumed by SePS and AdaPS.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub clusters: ClusterModel,
    /// Present when masks were generated (AdaPS).
    pub registry: Option<MaskRegistry>,
}

/// Everything needed to act and learn under one strategy.
#[derive(Debug, Clone)]
pub struct Bindings {
    pub strategy: SharingStrategy,
    pub arch: Architecture,
    pub store: ParameterStore,
    pub masks: Vec<NeuronMask>,
    pub handles: Vec<PolicyHandle>,
}

fn snp_masks(n_agents: usize, hidden: &[usize], drop_rate: f64, seed: u64) -> Vec<NeuronMask> {
    (0..n_agents)
        .map(|agent| {
            let mut rng = rng::stream(seed, rng::STREAM_SNP, agent as u64);
            loop {
                let layers = hidden
                    .iter()
                    .map(|&n| (0..n).map(|_| rng.random::<f64>() >= drop_rate).collect())
                    .collect();
                let mask = NeuronMask::new(layers);
                if mask.empty_layer().is_none() {
                    break mask;
                }
            }
        })
        .collect()
}

/// Build the parameter store, mask table and per-agent handles of a strategy.
pub fn build_bindings(
    strategy: SharingStrategy,
    arch: &Architecture,
    n_agents: usize,
    pretrained: Option<&Pretrained>,
    seed: u64,
    opt: OptimizerSettings,
) -> Result<Bindings> {
    strategy.validate(n_agents)?;
    let plain = |agent: usize, set: usize, mask: Option<usize>| PolicyHandle {
        agent,
        actor_set: set,
        critic_set: set,
        mask,
        augmentation: Augmentation::None,
    };
    let need_clusters = |k: usize| -> Result<&ClusterModel> {
        let p = pretrained.ok_or_else(|| {
            Error::Config(format!("{} requires identity clustering artifacts", strategy.kind()))
        })?;
        if p.clusters.k != k || p.clusters.assignments.len() != n_agents {
            return Err(Error::Config(format!(
                "clustering has K = {} over {} agents, strategy expects K = {k} over {n_agents}",
                p.clusters.k,
                p.clusters.assignments.len()
            )));
        }
        Ok(&p.clusters)
    };

    let (sets, masks, handles) = match strategy {
        SharingStrategy::NoPs => (n_agents, vec![], (0..n_agents).map(|i| plain(i, i, None)).collect()),
        SharingStrategy::FuPs => (1, vec![], (0..n_agents).map(|i| plain(i, 0, None)).collect()),
        SharingStrategy::FuPsId => (
            1,
            vec![],
            (0..n_agents)
                .map(|i| PolicyHandle {
                    augmentation: Augmentation::OneHotAgent { n_agents },
                    ..plain(i, 0, None)
                })
                .collect(),
        ),
        SharingStrategy::SePs { k } => {
            let clusters = need_clusters(k)?;
            (k, vec![], (0..n_agents).map(|i| plain(i, clusters.assignments[i], None)).collect())
        }
        SharingStrategy::SnpPs { drop_rate, seed: mask_seed } => (
            1,
            snp_masks(n_agents, &arch.hidden, drop_rate, mask_seed),
            (0..n_agents).map(|i| plain(i, 0, Some(i))).collect(),
        ),
        SharingStrategy::AdaPs { k, .. } => {
            let clusters = need_clusters(k)?;
            let registry = pretrained
                .and_then(|p| p.registry.as_ref())
                .ok_or_else(|| Error::Config("AdaPS requires a mask registry".into()))?;
            if registry.masks().len() != k || registry.hidden_sizes() != arch.hidden.as_slice() {
                return Err(Error::Config("mask registry does not match K or the architecture".into()));
            }
            (
                1,
                registry.masks().to_vec(),
                (0..n_agents).map(|i| plain(i, 0, Some(clusters.assignments[i]))).collect(),
            )
        }
    };
    let extra = if strategy.kind() == StrategyKind::FuPsId { n_agents } else { 0 };
    let store = ParameterStore {
        sets: (0..sets)
            .map(|s| ParameterSet::new(arch, extra, s, seed, opt))
            .collect::<Result<_>>()?,
    };
    Ok(Bindings {
        strategy,
        arch: arch.clone(),
        store,
        masks,
        handles,
    })
}

impl Bindings {
    pub fn n_agents(&self) -> usize {
        self.handles.len()
    }

    pub fn handle(&self, agent: usize) -> Result<&PolicyHandle> {
        self.handles
            .get(agent)
            .ok_or_else(|| Error::Contract(format!("no policy handle for agent {agent}")))
    }

    pub fn mask_of(&self, handle: &PolicyHandle) -> Result<Option<&NeuronMask>> {
        handle
            .mask
            .map(|m| {
                self.masks
                    .get(m)
                    .ok_or_else(|| Error::Contract(format!("agent {} refers to missing mask {m}", handle.agent)))
            })
            .transpose()
    }

    pub fn set_of(&self, id: usize) -> Result<&ParameterSet> {
        self.store
            .sets
            .get(id)
            .ok_or_else(|| Error::Contract(format!("missing parameter set {id}")))
    }

    /// Network input for `handle` (observation plus any augmentation).
    pub fn input<'a>(&self, handle: &PolicyHandle, obs: &'a [f64]) -> Result<Cow<'a, [f64]>> {
        if obs.len() != self.arch.obs_dim {
            return Err(Error::Dimension(format!(
                "observation has length {}, architecture expects {}",
                obs.len(),
                self.arch.obs_dim
            )));
        }
        Ok(match handle.augmentation {
            Augmentation::None => Cow::Borrowed(obs),
            Augmentation::OneHotAgent { n_agents } => {
                let mut v = Vec::with_capacity(obs.len() + n_agents);
                v.extend_from_slice(obs);
                v.extend((0..n_agents).map(|j| if j == handle.agent { 1.0 } else { 0.0 }));
                Cow::Owned(v)
            }
        })
    }

    /// Action distribution of `agent` given its observation.
    pub fn policy_forward(&self, agent: usize, obs: &[f64]) -> Result<Vec<f64>> {
        let h = self.handle(agent)?;
        let input = self.input(h, obs)?;
        self.set_of(h.actor_set)?.actor.output(&input, self.mask_of(h)?)
    }

    pub fn value_forward(&self, agent: usize, obs: &[f64]) -> Result<f64> {
        let h = self.handle(agent)?;
        let input = self.input(h, obs)?;
        Ok(self.set_of(h.critic_set)?.critic.output(&input, self.mask_of(h)?)?[0])
    }

    /// Agents bound to each parameter set.
    pub fn agents_per_set(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.store.len()];
        for h in &self.handles {
            out[h.actor_set].push(h.agent);
        }
        out
    }

    /// Audit table, one line per agent:
    ///
    /// ```text
    /// # strategy=<name> sets=<count> masks=<count>
    /// <agent> <actor set> <critic set> <mask id or -> <none|onehot>
    /// ```
    pub fn manifest(&self) -> String {
        let mut out = format!(
            "# strategy={} sets={} masks={}\n",
            self.strategy.kind(),
            self.store.len(),
            self.masks.len()
        );
        for h in &self.handles {
            let mask = h.mask.map_or("-".to_string(), |m| m.to_string());
            let aug = match h.augmentation {
                Augmentation::None => "none",
                Augmentation::OneHotAgent { .. } => "onehot",
            };
            writeln!(out, "{} {} {} {} {}", h.agent, h.actor_set, h.critic_set, mask, aug).unwrap();
        }
        out
    }

    /// Rebuild fresh bindings from a manifest and the mask table it refers to.
    pub fn from_manifest(
        strategy: SharingStrategy,
        arch: &Architecture,
        text: &str,
        masks: Vec<NeuronMask>,
        seed: u64,
        opt: OptimizerSettings,
    ) -> Result<Self> {
        let bad = |line: &str| Error::Parse(format!("bad manifest line {line:?}"));
        let mut handles: Vec<PolicyHandle> = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(line));
            handles.push(PolicyHandle {
                agent: num(f[0])?,
                actor_set: num(f[1])?,
                critic_set: num(f[2])?,
                mask: if f[3] == "-" { None } else { Some(num(f[3])?) },
                augmentation: match f[4] {
                    "none" => Augmentation::None,
                    "onehot" => Augmentation::OneHotAgent { n_agents: 0 },
                    _ => return Err(bad(line)),
                },
            });
        }
        let n = handles.len();
        for (i, h) in handles.iter_mut().enumerate() {
            if h.agent != i {
                return Err(Error::Parse(format!("manifest agents out of order at {i}")));
            }
            if let Augmentation::OneHotAgent { .. } = h.augmentation {
                h.augmentation = Augmentation::OneHotAgent { n_agents: n };
            }
        }
        let sets = handles.iter().map(|h| h.actor_set.max(h.critic_set) + 1).max().unwrap_or(0);
        let extra = handles.first().map_or(0, |h| h.augmentation.extra_inputs());
        let store = ParameterStore {
            sets: (0..sets)
                .map(|s| ParameterSet::new(arch, extra, s, seed, opt))
                .collect::<Result<_>>()?,
        };
        let bindings = Self {
            strategy,
            arch: arch.clone(),
            store,
            masks,
            handles,
        };
        for h in &bindings.handles {
            bindings.mask_of(h)?;
            bindings.set_of(h.critic_set)?;
        }
        Ok(bindings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::MaskRegistry;

    fn arch() -> Architecture {
        Architecture::new(6, 5, &[16, 16])
    }

    fn pretrained(assignments: Vec<usize>, k: usize, hidden: &[usize]) -> Pretrained {
        let centers: Vec<Vec<f64>> = (0..k).map(|c| vec![c as f64 * 3.0, (c as f64).sin()]).collect();
        let clusters = ClusterModel {
            k,
            assignments,
            centers,
            wcss: 0.0,
        };
        let (registry, _) = MaskRegistry::build_seeded(&clusters, 2, 0.2, hidden, 0).unwrap();
        Pretrained {
            clusters,
            registry: Some(registry),
        }
    }

    #[test]
    fn strategy_names_parse() {
        for kind in StrategyKind::ALL {
            assert_eq!(kind.to_string().parse::<StrategyKind>().unwrap(), kind);
        }
        assert_eq!("snpps".parse::<StrategyKind>().unwrap(), StrategyKind::SnpPs);
        assert_eq!("FUPS-ID".parse::<StrategyKind>().unwrap(), StrategyKind::FuPsId);
        assert!("ippo".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn set_counts_per_strategy() {
        let a = arch();
        let n = 9;
        let p = pretrained((0..n).map(|i| i / 3).collect(), 3, &a.hidden);
        let opt = OptimizerSettings::default();
        let cases = [
            (SharingStrategy::NoPs, n),
            (SharingStrategy::FuPs, 1),
            (SharingStrategy::FuPsId, 1),
            (SharingStrategy::SePs { k: 3 }, 3),
            (SharingStrategy::SnpPs { drop_rate: 0.3, seed: 1 }, 1),
            (SharingStrategy::AdaPs { k: 3, lambda: 0.2 }, 1),
        ];
        for (strategy, sets) in cases {
            let b = build_bindings(strategy, &a, n, Some(&p), 0, opt).unwrap();
            assert_eq!(b.store.len(), sets, "{:?}", strategy);
            assert_eq!(
                total_trainable_params(&b.store),
                planned_param_count(strategy.kind(), &a, n, 3),
                "{strategy:?}"
            );
        }
        let snp = build_bindings(SharingStrategy::SnpPs { drop_rate: 0.3, seed: 1 }, &a, n, None, 0, opt).unwrap();
        assert_eq!(snp.masks.len(), n);
        for i in 0..n {
            for j in i + 1..n {
                assert_ne!(snp.masks[i], snp.masks[j]);
            }
        }
    }

    #[test]
    fn paper_scale_size_ratios() {
        let a = Architecture::new(2 * 3 + 2 * 29, 5, &[64, 64]);
        assert_eq!(relative_model_size(StrategyKind::NoPs, &a, 30, 3), 30.0);
        assert_eq!(relative_model_size(StrategyKind::SePs, &a, 30, 3), 3.0);
        assert_eq!(relative_model_size(StrategyKind::AdaPs, &a, 30, 3), 1.0);
        let p = a.pair_params(0) as f64;
        // Both actor and critic widen their first layer by N inputs.
        let expected = (p + 2.0 * 30.0 * 64.0) / p;
        assert_eq!(relative_model_size(StrategyKind::FuPsId, &a, 30, 3), expected);
    }

    #[test]
    fn missing_artifacts_and_bad_k() {
        let a = arch();
        let opt = OptimizerSettings::default();
        assert!(build_bindings(SharingStrategy::SePs { k: 2 }, &a, 4, None, 0, opt).is_err());
        assert!(build_bindings(SharingStrategy::AdaPs { k: 2, lambda: 0.2 }, &a, 4, None, 0, opt).is_err());
        assert!(build_bindings(SharingStrategy::SePs { k: 4 }, &a, 4, None, 0, opt).is_err());
        let p = pretrained(vec![0, 0, 1, 1], 2, &a.hidden);
        let no_masks = Pretrained { registry: None, ..p };
        assert!(build_bindings(SharingStrategy::AdaPs { k: 2, lambda: 0.2 }, &a, 4, Some(&no_masks), 0, opt).is_err());
    }

    #[test]
    fn routing_per_strategy() {
        let a = arch();
        let opt = OptimizerSettings::default();
        let obs = [0.3, -0.2, 0.5, 0.9, -1.0, 0.1];

        let fups = build_bindings(SharingStrategy::FuPs, &a, 4, None, 0, opt).unwrap();
        assert_eq!(fups.policy_forward(0, &obs).unwrap(), fups.policy_forward(3, &obs).unwrap());

        let id = build_bindings(SharingStrategy::FuPsId, &a, 4, None, 0, opt).unwrap();
        let (h0, h1) = (id.handle(0).unwrap(), id.handle(1).unwrap());
        assert_ne!(id.input(h0, &obs).unwrap(), id.input(h1, &obs).unwrap());
        assert_eq!(id.input(h0, &obs).unwrap().len(), 10);

        let p = pretrained(vec![0, 1, 0, 1], 2, &a.hidden);
        let ada = build_bindings(SharingStrategy::AdaPs { k: 2, lambda: 0.2 }, &a, 4, Some(&p), 0, opt).unwrap();
        assert_eq!(ada.policy_forward(0, &obs).unwrap(), ada.policy_forward(2, &obs).unwrap());
        assert_eq!(ada.value_forward(1, &obs).unwrap(), ada.value_forward(3, &obs).unwrap());
        assert_ne!(ada.masks[0], ada.masks[1]);
        assert_ne!(ada.policy_forward(0, &obs).unwrap(), ada.policy_forward(1, &obs).unwrap());

        assert!(fups.policy_forward(0, &obs[..5]).is_err());
        assert!(fups.policy_forward(7, &obs).is_err());
    }

    #[test]
    fn snp_masks_are_reproducible() {
        let a = arch();
        let opt = OptimizerSettings::default();
        let s = SharingStrategy::SnpPs { drop_rate: 0.4, seed: 5 };
        let x = build_bindings(s, &a, 6, None, 0, opt).unwrap();
        let y = build_bindings(s, &a, 6, None, 99, opt).unwrap();
        assert_eq!(x.masks, y.masks);
        let mean_drop: f64 = x.masks.iter().map(|m| m.drop_fraction()).sum::<f64>() / 6.0;
        assert!((mean_drop - 0.4).abs() < 0.15, "{mean_drop}");
    }

    #[test]
    fn manifest_roundtrip() {
        let a = arch();
        let opt = OptimizerSettings::default();
        let p = pretrained(vec![1, 0, 1, 0, 1], 2, &a.hidden);
        let s = SharingStrategy::AdaPs { k: 2, lambda: 0.2 };
        let b = build_bindings(s, &a, 5, Some(&p), 3, opt).unwrap();
        let text = b.manifest();
        assert!(text.starts_with("# strategy=AdaPS sets=1 masks=2\n0 0 0 1 none\n"));
        let r = Bindings::from_manifest(s, &a, &text, b.masks.clone(), 3, opt).unwrap();
        assert_eq!(r.handles, b.handles);
        assert_eq!(r.store.sets[0].actor, b.store.sets[0].actor);

        let id = build_bindings(SharingStrategy::FuPsId, &a, 3, None, 0, opt).unwrap();
        let r = Bindings::from_manifest(SharingStrategy::FuPsId, &a, &id.manifest(), vec![], 0, opt).unwrap();
        assert_eq!(r.handles, id.handles);
    }
}
