//! Small dense feed-forward networks with exact reverse-mode gradients and
//! neuron-level masking.
//!
//! A mask zeroes the post-activation output of selected hidden neurons. This
//! is the same as zeroing that neuron's incoming row and outgoing column, so
//! a masked forward pass evaluates a subnetwork of the full parameter set.

mod checkpoint;
mod mask;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use mask::NeuronMask;
pub use optim::{rmsprop_step, sgd_step, RmsProp};

use rand::Rng;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation and the activation value.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Categorical distribution via softmax over the output layer.
    Softmax,
    /// Raw output layer (scalar value heads, regression outputs).
    Linear,
}

/// One dense layer. `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    #[inline]
    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.inputs..(out + 1) * self.inputs]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Parameters of a feed-forward network: `sizes = [input, hidden.., output]`.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    activation: Activation,
    head: Head,
    /// Bumped on every parameter update; traces carry the value they saw.
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.layers == other.layers
            && self.activation == other.activation
            && self.head == other.head
    }
}

/// Number of trainable parameters of a dense stack with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::Dimension(format!(
            "network needs at least one hidden layer, got sizes {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Dimension(format!("zero-width layer in {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        Self::with_gain(sizes, activation, head, 1.0, rng)
    }

    /// Like [`Mlp::new`] with every weight multiplied by `gain`.
    pub fn with_gain<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        head: Head,
        gain: f64,
        rng: &mut R,
    ) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                let mut layer = Layer::zeros(inputs, outputs);
                for v in layer.weights.iter_mut() {
                    *v = gain * rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
            head,
            generation: next_generation(),
        })
    }

    pub fn zeros(sizes: &[usize], activation: Activation, head: Head) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            activation,
            head,
            generation: next_generation(),
        })
    }

    /// Assemble a network from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("no layers".into()));
        }
        let mut sizes = vec![layers[0].inputs];
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs != *sizes.last().unwrap() {
                return Err(Error::Dimension(format!(
                    "layer {i} expects {} inputs, previous layer yields {}",
                    layer.inputs,
                    sizes.last().unwrap()
                )));
            }
            if layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Dimension(format!("layer {i} buffers do not match its shape")));
            }
            sizes.push(layer.outputs);
        }
        validate_sizes(&sizes)?;
        let net = Self {
            sizes,
            layers,
            activation,
            head,
            generation: next_generation(),
        };
        net.check_finite()?;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to the raw layers. Invalidates outstanding traces.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation = next_generation();
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.sizes)
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite parameter in layer {i}")));
            }
        }
        Ok(())
    }

    /// All parameters flattened layer by layer (weights, then biases).
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for layer in self.layers_mut() {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&NeuronMask>) -> Result<()> {
        if let Some(mask) = mask {
            mask.check_against(self.hidden_sizes())?;
        }
        Ok(())
    }

    /// Forward pass. Hidden activations are multiplied by the mask after the
    /// nonlinearity; a softmax head yields probabilities.
    pub fn forward(&self, input: &[f64], mask: Option<&NeuronMask>) -> Result<Trace> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        self.check_mask(mask)?;

        let depth = self.layers.len();
        let mut activations = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        activations.push(input.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let x = activations.last().unwrap();
            let z: Vec<f64> = (0..layer.outputs)
                .map(|o| layer.biases[o] + dot(layer.row(o), x))
                .collect();
            if l + 1 < depth {
                let keep = mask.map(|m| m.layer(l));
                let h = z
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| match keep {
                        Some(k) if !k[j] => 0.0,
                        _ => self.activation.apply(v),
                    })
                    .collect();
                pre.push(z);
                activations.push(h);
            } else {
                let out = match self.head {
                    Head::Linear => z.clone(),
                    Head::Softmax => softmax(&z),
                };
                pre.push(z);
                activations.push(out);
            }
        }
        Ok(Trace {
            activations,
            pre,
            generation: self.generation,
            masked: mask.is_some(),
        })
    }

    /// Convenience wrapper returning only the output vector.
    pub fn output(&self, input: &[f64], mask: Option<&NeuronMask>) -> Result<Vec<f64>> {
        Ok(self.forward(input, mask)?.into_output())
    }

    /// Reverse pass. `upstream` is the loss gradient with respect to the
    /// output layer's pre-head values (the logits for a softmax head, the
    /// outputs themselves for a linear head); see [`softmax_backward`] to
    /// convert a gradient taken with respect to probabilities.
    ///
    /// Returns the parameter gradient and the gradient with respect to the input.
    pub fn backward(
        &self,
        trace: &Trace,
        mask: Option<&NeuronMask>,
        upstream: &[f64],
    ) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(trace, mask, upstream, 1.0, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Accumulating reverse pass: adds `scale * dLoss/dparams` into `grads` and
    /// returns `scale * dLoss/dinput`.
    pub fn backward_into(
        &self,
        trace: &Trace,
        mask: Option<&NeuronMask>,
        upstream: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if trace.generation != self.generation {
            return Err(Error::Contract(
                "trace was produced by a different or since-updated network".into(),
            ));
        }
        if trace.masked != mask.is_some()
            || trace.activations.len() != self.layers.len() + 1
            || trace.activations[0].len() != self.input_dim()
        {
            return Err(Error::Contract("trace does not match this backward call".into()));
        }
        self.check_mask(mask)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "upstream gradient has length {}, output has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len())
        {
            return Err(Error::Dimension("gradient buffer shape differs from network".into()));
        }

        let mut delta: Vec<f64> = upstream.iter().map(|g| g * scale).collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &trace.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &xi) in row.iter_mut().zip(x) {
                    *gw += d * xi;
                }
            }
            let mut back = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (b, &w) in back.iter_mut().zip(layer.row(o)) {
                    *b += d * w;
                }
            }
            if l == 0 {
                return Ok(back);
            }
            let keep = mask.map(|m| m.layer(l - 1));
            let pre = &trace.pre[l - 1];
            delta = back
                .iter()
                .enumerate()
                .map(|(j, &b)| match keep {
                    Some(k) if !k[j] => 0.0,
                    _ => b * self.activation.derivative(pre[j], x[j]),
                })
                .collect();
        }
        unreachable!("loop returns at the input layer")
    }
}

/// Intermediate values of one forward pass, sufficient for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l]` the (masked) output of
    /// layer `l - 1`; the last entry is the network output.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    generation: u64,
    masked: bool,
}

impl Trace {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.activations.pop().unwrap()
    }

    /// Pre-head values of the output layer (logits for a softmax head).
    pub fn logits(&self) -> &[f64] {
        self.pre.last().unwrap()
    }

    /// Post-mask activations of hidden layer `l`.
    pub fn hidden(&self, l: usize) -> &[f64] {
        &self.activations[l + 1]
    }
}

/// Gradient buffer shaped like an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.biases.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= factor);
            l.biases.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn add(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Dimension("gradient buffers differ in depth".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if a.weights.len() != b.weights.len() || a.biases.len() != b.biases.len() {
                return Err(Error::Dimension("gradient buffers differ in shape".into()));
            }
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }
}

/// Scale `grads_list` jointly so their combined L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads_list: &mut [&mut Gradients], max_norm: f64) -> f64 {
    let total = grads_list
        .iter()
        .map(|g| g.norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if total > max_norm && total > 0.0 {
        let factor = max_norm / total;
        for g in grads_list.iter_mut() {
            g.scale(factor);
        }
    }
    total
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Converts dLoss/dprobabilities into dLoss/dlogits for a softmax head.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(dprobs).map(|(p, g)| p * g).sum();
    probs.iter().zip(dprobs).map(|(p, g)| p * (g - inner)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
