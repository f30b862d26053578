//! Finite-difference gradient checking for whole networks.
//!
//! The harness drives a scalar squared loss against a fixed target, compares
//! the analytic parameter/input gradients against central differences, and
//! reports the worst relative error. Everything runs in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ConvNet;
use crate::error::{Error, Result};
use crate::grid::Grid2D;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// How many weights to probe per layer (0 = all).
    pub weights_per_layer: usize,
    /// How many biases to probe per layer (0 = all).
    pub biases_per_layer: usize,
    /// How many input elements to probe (0 = all).
    pub input_samples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            weights_per_layer: 24,
            biases_per_layer: 0,
            input_samples: 64,
            seed: 0x9d5f,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// L = 0.5 * sum((out - target)^2); returns the loss and dL/dout.
pub fn squared_loss_with_grad(out: &Grid2D<f64>, target: &Grid2D<f64>) -> (f64, Grid2D<f64>) {
    assert_eq!(out.shape(), target.shape());
    let mut grad = out.clone();
    let mut loss = 0.0;
    for (g, &t) in grad.values_mut().iter_mut().zip(target.values()) {
        let d = *g - t;
        loss += 0.5 * d * d;
        *g = d;
    }
    (loss, grad)
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-4)
}

/// Compares analytic gradients of the squared loss against central finite
/// differences over a deterministic subsample of parameters and inputs.
pub fn gradient_check(
    net: &ConvNet<f64>,
    input: &Grid2D<f64>,
    target: &Grid2D<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (out, trace) = net.forward_trace(input)?;
    let (_, grad_out) = squared_loss_with_grad(&out, target);
    let (param_grads, input_grad) = net.backward(&trace, &grad_out);

    for g in param_grads.iter().chain(input_grad.values().iter()) {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient_check: analytic gradients".into(),
            });
        }
    }

    let loss_at = |net: &ConvNet<f64>| -> Result<f64> {
        let out = net.forward(input)?;
        Ok(squared_loss_with_grad(&out, target).0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let h = cfg.step;

    let sample_indices = |rng: &mut ChaCha8Rng, total: usize, requested: usize| -> Vec<usize> {
        let mut indices: Vec<usize> = if requested == 0 || requested >= total {
            (0..total).collect()
        } else {
            (0..requested).map(|_| rng.random_range(0..total)).collect()
        };
        indices.sort_unstable();
        indices.dedup();
        indices
    };

    let mut scratch = net.clone();
    for layer in 0..net.params().layers.len() {
        let n_weights = net.params().layers[layer].weights.len();
        let weight_indices = sample_indices(&mut rng, n_weights, cfg.weights_per_layer);

        for wi in weight_indices {
            let orig = scratch.params().layers[layer].weights[wi];
            scratch.params_mut().layers[layer].weights[wi] = orig + h;
            let up = loss_at(&scratch)?;
            scratch.params_mut().layers[layer].weights[wi] = orig - h;
            let down = loss_at(&scratch)?;
            scratch.params_mut().layers[layer].weights[wi] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_rel = max_rel.max(rel_error(param_grads.layers[layer].weights[wi], numeric));
            checked += 1;
        }

        let n_biases = net.params().layers[layer].bias.len();
        for bi in sample_indices(&mut rng, n_biases, cfg.biases_per_layer) {
            let orig = scratch.params().layers[layer].bias[bi];
            scratch.params_mut().layers[layer].bias[bi] = orig + h;
            let up = loss_at(&scratch)?;
            scratch.params_mut().layers[layer].bias[bi] = orig - h;
            let down = loss_at(&scratch)?;
            scratch.params_mut().layers[layer].bias[bi] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_rel = max_rel.max(rel_error(param_grads.layers[layer].bias[bi], numeric));
            checked += 1;
        }
    }

    let n_inputs = input.values().len();
    let mut probe = input.clone();
    for ii in sample_indices(&mut rng, n_inputs, cfg.input_samples) {
        let orig = probe.values()[ii];
        probe.values_mut()[ii] = orig + h;
        let up = {
            let out = net.forward(&probe)?;
            squared_loss_with_grad(&out, target).0
        };
        probe.values_mut()[ii] = orig - h;
        let down = {
            let out = net.forward(&probe)?;
            squared_loss_with_grad(&out, target).0
        };
        probe.values_mut()[ii] = orig;
        let numeric = (up - down) / (2.0 * h);
        max_rel = max_rel.max(rel_error(input_grad.values()[ii], numeric));
        checked += 1;
    }

    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked,
    })
}
