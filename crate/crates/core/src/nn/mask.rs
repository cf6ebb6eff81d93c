use crate::error::{Error, Result};

/// Binary activation pattern over the hidden neurons of a network.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeuronMask {
    layers: Vec<Vec<bool>>,
}

impl NeuronMask {
    pub fn new(layers: Vec<Vec<bool>>) -> Self {
        Self { layers }
    }

    pub fn all_active(hidden_sizes: &[usize]) -> Self {
        Self {
            layers: hidden_sizes.iter().map(|&n| vec![true; n]).collect(),
        }
    }

    /// Split a flat bit vector into per-layer vectors in hidden-layer order.
    pub fn from_flat(bits: &[bool], hidden_sizes: &[usize]) -> Result<Self> {
        let total: usize = hidden_sizes.iter().sum();
        if bits.len() != total {
            return Err(Error::Dimension(format!(
                "mask has {} entries, architecture has {total} hidden neurons",
                bits.len()
            )));
        }
        let mut offset = 0;
        let layers = hidden_sizes
            .iter()
            .map(|&n| {
                let layer = bits[offset..offset + n].to_vec();
                offset += n;
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    /// Parse a `0`/`1` string into a mask with the given layer sizes.
    pub fn from_bit_string(s: &str, hidden_sizes: &[usize]) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid mask character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_flat(&bits, hidden_sizes)
    }

    pub fn to_bit_string(&self) -> String {
        self.layers
            .iter()
            .flatten()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &[bool] {
        &self.layers[l]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn flat(&self) -> Vec<bool> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn active_count(&self) -> usize {
        self.layers.iter().flatten().filter(|&&b| b).count()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn drop_fraction(&self) -> f64 {
        1.0 - self.active_count() as f64 / self.total() as f64
    }

    /// First hidden layer with no active neuron.
    pub fn empty_layer(&self) -> Option<usize> {
        self.layers.iter().position(|l| !l.iter().any(|&b| b))
    }

    /// Checks shape congruence with `hidden_sizes` and the one-active-neuron rule.
    pub fn check_against(&self, hidden_sizes: &[usize]) -> Result<()> {
        if self.layers.len() != hidden_sizes.len()
            || self.layers.iter().zip(hidden_sizes).any(|(l, &n)| l.len() != n)
        {
            return Err(Error::Dimension(format!(
                "mask layer sizes {:?} do not match hidden sizes {hidden_sizes:?}",
                self.sizes()
            )));
        }
        if let Some(l) = self.empty_layer() {
            return Err(Error::Contract(format!("mask layer {l} has no active neuron")));
        }
        Ok(())
    }

    /// Entrywise `self <= other`.
    pub fn is_subset_of(&self, other: &NeuronMask) -> bool {
        self.sizes() == other.sizes()
            && self
                .layers
                .iter()
                .flatten()
                .zip(other.layers.iter().flatten())
                .all(|(&a, &b)| !a || b)
    }
}
