//! Browser bindings: mask explorer, k-means on clicked points, size report.

use maskshare::cluster::{kmeans, threshold_mask, MappingNetwork};
use maskshare::env::{EnvKind, EnvSpec};
use maskshare::harness::{size_report, size_report_csv};
use maskshare::sharing::Architecture;
use maskshare::{Error, Result};
use wasm_bindgen::prelude::*;

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("not a count: {v:?}"))))
        .collect()
}

/// A frozen mapping network from 2-D cluster centers to neuron masks.
#[wasm_bindgen]
pub struct MaskExplorer {
    map: MappingNetwork,
    hidden: Vec<usize>,
}

impl MaskExplorer {
    pub fn build(seed: u64, hidden: &[usize]) -> Result<Self> {
        Ok(Self {
            map: MappingNetwork::new(2, hidden, seed)?,
            hidden: hidden.to_vec(),
        })
    }

    pub fn probs(&self, x: f64, y: f64) -> Result<Vec<f64>> {
        self.map.probabilities(&[x, y])
    }

    /// One byte per hidden neuron, layer after layer.
    pub fn bits(&self, x: f64, y: f64, lambda: f64) -> Result<Vec<u8>> {
        let mask = threshold_mask(&self.probs(x, y)?, lambda, &self.hidden)?;
        Ok(mask.flat().into_iter().map(u8::from).collect())
    }
}

#[wasm_bindgen]
impl MaskExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, hidden: &str) -> Result<MaskExplorer, JsError> {
        Self::build(seed, &parse_list(hidden).map_err(js)?).map_err(js)
    }

    pub fn probabilities(&self, x: f64, y: f64) -> Result<Vec<f64>, JsError> {
        self.probs(x, y).map_err(js)
    }

    pub fn mask(&self, x: f64, y: f64, lambda: f64) -> Result<Vec<u8>, JsError> {
        self.bits(x, y, lambda).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn hidden(&self) -> Vec<u32> {
        self.hidden.iter().map(|&h| h as u32).collect()
    }
}

pub fn cluster(xy: &[f64], k: usize, seed: u64) -> Result<Vec<u32>> {
    if !xy.len().is_multiple_of(2) {
        return Err(Error::Dimension("coordinates must come in x, y pairs".into()));
    }
    let points: Vec<Vec<f64>> = xy.chunks(2).map(<[f64]>::to_vec).collect();
    Ok(kmeans(&points, k, seed)?.assignments.into_iter().map(|a| a as u32).collect())
}

/// k-means over flat `x0, y0, x1, y1, ..` coordinates; returns cluster ids.
#[wasm_bindgen]
pub fn cluster_points(xy: &[f64], k: usize, seed: u64) -> Result<Vec<u32>, JsError> {
    cluster(xy, k, seed).map_err(js)
}

pub fn sizes_csv(env: &str, agents: &str, k: usize, hidden: &str) -> Result<String> {
    let kind: EnvKind = env.parse()?;
    let agents = parse_list(agents)?;
    let spec = match kind {
        EnvKind::Bps => EnvSpec::bps(&agents),
        EnvKind::Lbf => EnvSpec::lbf(&agents),
    };
    spec.validate()?;
    let arch = Architecture::new(spec.obs_dim(), spec.action_dim(), &parse_list(hidden)?);
    Ok(size_report_csv(&size_report(&arch, spec.n_agents(), k)))
}

/// Relative model sizes of all strategies as CSV.
#[wasm_bindgen]
pub fn model_sizes(env: &str, agents: &str, k: usize, hidden: &str) -> Result<String, JsError> {
    sizes_csv(env, agents, k, hidden).map_err(js)
}
