//! Adam optimizer with bias-corrected moments.

use crate::error::{Error, Result};
use crate::net::{LayerParams, NetworkParams};
use crate::scalar::Scalar;

/// Optimizer hyper-parameters (defaults: 0.9 / 0.999 / 1e-8).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, mirroring the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<S> {
    pub m: NetworkParams<S>,
    pub v: NetworkParams<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn zeros_like(params: &NetworkParams<S>) -> Self {
        let zeros = || NetworkParams {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![S::zero(); l.weights.len()],
                    bias: vec![S::zero(); l.bias.len()],
                })
                .collect(),
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One Adam update over all layers.
///
/// Non-finite gradients abort before any parameter is touched and report
/// the offending layer.
pub fn adam_step<S: Scalar>(
    params: &mut NetworkParams<S>,
    grads: &NetworkParams<S>,
    state: &mut AdamState<S>,
    hp: &AdamParams,
    lr: f64,
) -> Result<()> {
    if params.layers.len() != grads.layers.len() {
        return Err(Error::Config("adam_step: layer count mismatch".into()));
    }
    for (idx, layer) in grads.layers.iter().enumerate() {
        if layer.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradients of layer {idx}"),
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let corr1 = S::from_f64(1.0 - hp.beta1.powi(t));
    let corr2 = S::from_f64(1.0 - hp.beta2.powi(t));
    let b1 = S::from_f64(hp.beta1);
    let b2 = S::from_f64(hp.beta2);
    let one = S::one();
    let eps = S::from_f64(hp.epsilon);
    let rate = S::from_f64(lr);

    for (layer_idx, layer) in params.layers.iter_mut().enumerate() {
        let g_layer = &grads.layers[layer_idx];
        let m_layer = &mut state.m.layers[layer_idx];
        let v_layer = &mut state.v.layers[layer_idx];
        for ((p, &g), (m, v)) in layer
            .iter_mut()
            .zip(g_layer.iter())
            .zip(m_layer.iter_mut().zip(v_layer.iter_mut()))
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - rate * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
