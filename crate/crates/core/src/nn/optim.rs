//! First-order optimizers.
//!
//! RMSProp follows the accumulator-inside-the-root form:
//!
//! ```text
//! s <- decay * s + (1 - decay) * g^2
//! w <- w - lr * g / sqrt(s + epsilon)
//! ```

use super::{Gradients, Mlp};
use crate::error::{Error, Result};

fn check_update(net: &Mlp, grads: &Gradients, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if grads.layers.len() != net.layers().len()
        || grads
            .layers
            .iter()
            .zip(net.layers())
            .any(|(g, l)| g.weights.len() != l.weights.len() || g.biases.len() != l.biases.len())
    {
        return Err(Error::Dimension("gradient buffer shape differs from network".into()));
    }
    if let Some(layer) = grads.first_non_finite_layer() {
        return Err(Error::Numeric(format!("non-finite gradient in layer {layer}")));
    }
    Ok(())
}

/// `w <- w - lr * g`.
pub fn sgd_step(net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
    check_update(net, grads, lr)?;
    for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
        for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
            *w -= lr * gw;
        }
        for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
            *b -= lr * gb;
        }
    }
    Ok(())
}

/// RMSProp accumulator state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub decay: f64,
    pub epsilon: f64,
    square_avg: Gradients,
}

impl RmsProp {
    pub fn new(net: &Mlp, decay: f64, epsilon: f64) -> Self {
        Self {
            decay,
            epsilon,
            square_avg: Gradients::zeros_like(net),
        }
    }

    pub fn square_avg(&self) -> &Gradients {
        &self.square_avg
    }
}

pub fn rmsprop_step(net: &mut Mlp, grads: &Gradients, state: &mut RmsProp, lr: f64) -> Result<()> {
    check_update(net, grads, lr)?;
    let (decay, eps) = (state.decay, state.epsilon);
    for ((layer, g), s) in net
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.square_avg.layers.iter_mut())
    {
        let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
        let gs = g.weights.iter().chain(&g.biases);
        let ss = s.weights.iter_mut().chain(s.biases.iter_mut());
        for ((w, &gi), si) in params.zip(gs).zip(ss) {
            *si = decay * *si + (1.0 - decay) * gi * gi;
            *w -= lr * gi / (*si + eps).sqrt();
        }
    }
    Ok(())
}
