//! Cluster-center to subnetwork-mask mapping.
//!
//! A mapping network with random, never-trained weights turns a cluster center
//! into one activation probability per hidden neuron of the policy
//! architecture (sigmoid of its output). A neuron stays active iff its
//! probability is strictly above the drop threshold λ.

use std::fmt::Write as _;
use std::path::Path;

use super::ClusterModel;
use crate::error::{Error, Result};
use crate::nn::{self, Activation, Head, Mlp, NeuronMask};
use crate::rng;

pub const DEFAULT_LAMBDA: f64 = 0.2;
pub const MAPPING_HIDDEN: usize = 64;
/// Weight gain of the mapping network. Glorot scale alone leaves the
/// pre-sigmoid outputs within a few hundredths of zero for unit-scale inputs,
/// which would keep every neuron above any λ < 0.5.
pub const MAPPING_GAIN: f64 = 6.0;
pub const MAPPING_RETRIES: u64 = 5;

/// Frozen random network `m -> 64 (relu) -> total hidden neurons`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingNetwork {
    net: Mlp,
    seed: u64,
}

impl MappingNetwork {
    pub fn new(latent_dim: usize, hidden_sizes: &[usize], seed: u64) -> Result<Self> {
        let total: usize = hidden_sizes.iter().sum();
        let net = Mlp::with_gain(
            &[latent_dim, MAPPING_HIDDEN, total],
            Activation::Relu,
            Head::Linear,
            MAPPING_GAIN,
            &mut rng::stream(seed, rng::STREAM_MAPPING, 0),
        )?;
        Ok(Self { net, seed })
    }

    /// Wrap an explicit network (its output layer size sets the neuron count).
    pub fn from_mlp(net: Mlp, seed: u64) -> Self {
        Self { net, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn latent_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    /// Activation probability per hidden neuron.
    pub fn probabilities(&self, center: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .net
            .output(center, None)?
            .into_iter()
            .map(nn::sigmoid)
            .collect())
    }

    /// Checkpoint bytes; used to assert the network never changes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        nn::write_checkpoint(&self.net, &mut out).expect("writing to memory");
        out
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("λ must lie in [0, 1), got {lambda}")));
    }
    Ok(())
}

/// Threshold probabilities into a mask without the empty-layer guard.
pub fn threshold_mask(probabilities: &[f64], lambda: f64, hidden_sizes: &[usize]) -> Result<NeuronMask> {
    let bits: Vec<bool> = probabilities.iter().map(|&p| p > lambda).collect();
    NeuronMask::from_flat(&bits, hidden_sizes)
}

/// `d(sigmoid(f_m(center)))` sliced per hidden layer.
pub fn generate_mask(
    map: &MappingNetwork,
    center: &[f64],
    lambda: f64,
    hidden_sizes: &[usize],
) -> Result<NeuronMask> {
    check_lambda(lambda)?;
    if center.len() != map.latent_dim() {
        return Err(Error::Dimension(format!(
            "center has dimension {}, mapping network expects {}",
            center.len(),
            map.latent_dim()
        )));
    }
    let mask = threshold_mask(&map.probabilities(center)?, lambda, hidden_sizes)?;
    if let Some(layer) = mask.empty_layer() {
        return Err(Error::Config(format!(
            "λ = {lambda} deactivates every neuron of hidden layer {layer}; use a smaller λ"
        )));
    }
    Ok(mask)
}

/// Shift centers to zero mean and scale them to unit RMS distance from it.
///
/// Identity latents have no fixed scale or origin, so masks are generated from
/// the centers' relative layout. A single center (or coincident centers) maps
/// to the origin.
pub fn standardize_centers(centers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = centers.len() as f64;
    let dim = centers.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..dim)
        .map(|d| centers.iter().map(|c| c[d]).sum::<f64>() / k)
        .collect();
    let rms = (centers
        .iter()
        .map(|c| c.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>())
        .sum::<f64>()
        / k)
        .sqrt();
    centers
        .iter()
        .map(|c| {
            c.iter()
                .zip(&mean)
                .map(|(x, m)| if rms > 1e-12 { (x - m) / rms } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Stored per-cluster masks. Built once, read-only afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRegistry {
    lambda: f64,
    /// Seed of the mapping network that produced the masks.
    seed: u64,
    hidden_sizes: Vec<usize>,
    masks: Vec<NeuronMask>,
}

impl MaskRegistry {
    /// One mask per cluster from a given mapping network.
    pub fn build(
        model: &ClusterModel,
        map: &MappingNetwork,
        lambda: f64,
        hidden_sizes: &[usize],
    ) -> Result<Self> {
        let masks = standardize_centers(&model.centers)
            .iter()
            .map(|c| generate_mask(map, c, lambda, hidden_sizes))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lambda,
            seed: map.seed(),
            hidden_sizes: hidden_sizes.to_vec(),
            masks,
        })
    }

    /// Draws the mapping network from `seed`; if some cluster mask loses a
    /// whole layer, redraws with `seed + 1`, up to [`MAPPING_RETRIES`] times.
    pub fn build_seeded(
        model: &ClusterModel,
        latent_dim: usize,
        lambda: f64,
        hidden_sizes: &[usize],
        seed: u64,
    ) -> Result<(Self, MappingNetwork)> {
        check_lambda(lambda)?;
        let mut last = None;
        for attempt in 0..=MAPPING_RETRIES {
            let map = MappingNetwork::new(latent_dim, hidden_sizes, seed + attempt)?;
            match Self::build(model, &map, lambda, hidden_sizes) {
                Ok(registry) => return Ok((registry, map)),
                Err(Error::Config(msg)) => last = Some(msg),
                Err(other) => return Err(other),
            }
        }
        Err(Error::Config(format!(
            "no mapping network among {} draws yields a usable mask: {}",
            MAPPING_RETRIES + 1,
            last.unwrap_or_default()
        )))
    }

    pub fn from_masks(lambda: f64, seed: u64, hidden_sizes: &[usize], masks: Vec<NeuronMask>) -> Result<Self> {
        for m in &masks {
            m.check_against(hidden_sizes)?;
        }
        Ok(Self {
            lambda,
            seed,
            hidden_sizes: hidden_sizes.to_vec(),
            masks,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn masks(&self) -> &[NeuronMask] {
        &self.masks
    }

    pub fn mask(&self, cluster: usize) -> Option<&NeuronMask> {
        self.masks.get(cluster)
    }

    pub fn mean_drop_fraction(&self) -> f64 {
        self.masks.iter().map(NeuronMask::drop_fraction).sum::<f64>() / self.masks.len() as f64
    }

    /// Text form:
    ///
    /// ```text
    /// lambda=<λ>
    /// seed=<mapping seed>
    /// architecture=<h1>,<h2>,...
    /// <cluster id> <0/1 string over all hidden neurons, layer order>
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let arch = self
            .hidden_sizes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "lambda={}", self.lambda).unwrap();
        writeln!(out, "seed={}", self.seed).unwrap();
        writeln!(out, "architecture={arch}").unwrap();
        for (k, m) in self.masks.iter().enumerate() {
            writeln!(out, "{k} {}", m.to_bit_string()).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lambda = None;
        let mut seed = None;
        let mut hidden: Option<Vec<usize>> = None;
        let mut rows = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "lambda" => lambda = Some(parse(value)?),
                    "seed" => seed = Some(parse(value)?),
                    "architecture" => {
                        hidden = Some(value.split(',').map(|v| parse(v.trim())).collect::<Result<_>>()?)
                    }
                    other => return Err(Error::Parse(format!("unknown mask file key {other:?}"))),
                }
            } else {
                let (id, bits) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| Error::Parse(format!("bad mask line {line:?}")))?;
                rows.push((parse::<usize>(id)?, bits.trim().to_string()));
            }
        }
        let hidden = hidden.ok_or_else(|| Error::Parse("mask file lacks architecture".into()))?;
        let mut masks = Vec::with_capacity(rows.len());
        for (expected, (id, bits)) in rows.into_iter().enumerate() {
            if id != expected {
                return Err(Error::Parse(format!("mask ids out of order at {id}")));
            }
            masks.push(NeuronMask::from_bit_string(&bits, &hidden)?);
        }
        Self::from_masks(
            lambda.ok_or_else(|| Error::Parse("mask file lacks lambda".into()))?,
            seed.ok_or_else(|| Error::Parse("mask file lacks seed".into()))?,
            &hidden,
            masks,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {s:?}")))
}

/// Mean drop fraction the mapping network of `seed` realizes at `lambda` over
/// a fixed set of random standardized cluster layouts.
pub fn estimated_drop_fraction(latent_dim: usize, hidden_sizes: &[usize], lambda: f64, seed: u64) -> Result<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let map = MappingNetwork::new(latent_dim, hidden_sizes, seed)?;
    let mut rng = rng::stream(seed, rng::STREAM_MAPPING, 1);
    let mut dropped = 0.0;
    let mut count = 0.0;
    for _ in 0..32 {
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..latent_dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        for c in standardize_centers(&centers) {
            let p = map.probabilities(&c)?;
            dropped += p.iter().filter(|&&v| v <= lambda).count() as f64;
            count += p.len() as f64;
        }
    }
    Ok(dropped / count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use proptest::prelude::*;

    const HIDDEN: [usize; 2] = [64, 64];

    fn model(centers: Vec<Vec<f64>>) -> ClusterModel {
        ClusterModel {
            k: centers.len(),
            assignments: (0..centers.len()).collect(),
            centers,
            wcss: 0.0,
        }
    }

    #[test]
    fn lambda_zero_gives_all_ones() {
        let map = MappingNetwork::new(2, &HIDDEN, 4).unwrap();
        for c in [[0.0, 0.0], [3.0, -1.0], [-10.0, 7.0]] {
            let m = generate_mask(&map, &c, 0.0, &HIDDEN).unwrap();
            assert_eq!(m.active_count(), 128);
        }
    }

    #[test]
    fn lambda_one_is_rejected_by_guard() {
        let map = MappingNetwork::new(2, &HIDDEN, 4).unwrap();
        let err = generate_mask(&map, &[0.5, 0.5], 1.0, &HIDDEN).unwrap_err();
        assert!(err.to_string().contains("smaller λ"), "{err}");
        assert!(generate_mask(&map, &[0.5, 0.5], -0.1, &HIDDEN).is_err());
        assert!(generate_mask(&map, &[0.5], 0.2, &HIDDEN).is_err());
    }

    #[test]
    fn strict_threshold_on_hand_built_network() {
        // Zero weights; output biases -2 (sigmoid ≈ 0.1192) and 0 (sigmoid 0.5).
        let net = Mlp::from_layers(
            vec![
                Layer::zeros(2, 3),
                Layer {
                    inputs: 3,
                    outputs: 4,
                    weights: vec![0.0; 12],
                    biases: vec![-2.0, 0.0, 0.0, -2.0],
                },
            ],
            Activation::Relu,
            Head::Linear,
        )
        .unwrap();
        let map = MappingNetwork::from_mlp(net, 0);
        let p = map.probabilities(&[0.0, 0.0]).unwrap();
        assert!((p[0] - 0.119_202_922_022_118).abs() < 1e-12);
        let m = generate_mask(&map, &[1.0, 1.0], 0.2, &[2, 2]).unwrap();
        assert_eq!(m.to_bit_string(), "0110");
        // Exactly at the threshold counts as dropped.
        let m = threshold_mask(&[0.5, 0.2, 0.2000001], 0.2, &[3]).unwrap();
        assert_eq!(m.to_bit_string(), "101");
    }

    #[test]
    fn equal_centers_equal_masks() {
        let m = model(vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let (reg, _) = MaskRegistry::build_seeded(&m, 2, DEFAULT_LAMBDA, &HIDDEN, 0).unwrap();
        assert_eq!(reg.masks()[0], reg.masks()[1]);
        assert_eq!(reg.lambda(), 0.2);
    }

    #[test]
    fn separated_centers_get_distinct_masks_across_seeds() {
        let m = model(vec![vec![-5.0, 0.0], vec![5.0, 0.0]]);
        for seed in 0..100 {
            let (reg, _) = MaskRegistry::build_seeded(&m, 2, DEFAULT_LAMBDA, &HIDDEN, seed).unwrap();
            assert_ne!(reg.masks()[0], reg.masks()[1], "seed {seed}");
        }
    }

    #[test]
    fn mask_file_roundtrip() {
        let m = model(vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![-1.0, -1.0]]);
        let (reg, _) = MaskRegistry::build_seeded(&m, 2, 0.3, &[16, 8], 9).unwrap();
        let text = reg.to_text();
        assert!(text.starts_with("lambda=0.3\nseed=9\narchitecture=16,8\n0 "));
        assert_eq!(MaskRegistry::from_text(&text).unwrap(), reg);
    }

    #[test]
    fn realized_drop_fraction_is_moderate() {
        let f = estimated_drop_fraction(2, &HIDDEN, DEFAULT_LAMBDA, 0).unwrap();
        assert!(f > 0.1 && f < 0.6, "{f}");
    }

    #[test]
    fn generation_is_pure() {
        let map = MappingNetwork::new(2, &HIDDEN, 1).unwrap();
        let a = generate_mask(&map, &[0.3, -0.8], 0.2, &HIDDEN).unwrap();
        let b = generate_mask(&map, &[0.3, -0.8], 0.2, &HIDDEN).unwrap();
        assert_eq!(a, b);
        let rebuilt = MappingNetwork::new(2, &HIDDEN, 1).unwrap();
        assert_eq!(map.to_bytes(), rebuilt.to_bytes());
    }

    proptest! {
        #[test]
        fn raising_lambda_never_activates(
            cx in -3.0f64..3.0, cy in -3.0f64..3.0,
            l1 in 0.0f64..0.99, dl in 0.0f64..0.5, seed in 0u64..50,
        ) {
            let l2 = (l1 + dl).min(0.999);
            let map = MappingNetwork::new(2, &HIDDEN, seed).unwrap();
            let p = map.probabilities(&[cx, cy]).unwrap();
            let low = threshold_mask(&p, l1, &HIDDEN).unwrap();
            let high = threshold_mask(&p, l2, &HIDDEN).unwrap();
            prop_assert!(high.is_subset_of(&low));
        }
    }
}
