//! Minimal differentiable building blocks: 2D convolutions, leaky-ReLU,
//! pairwise softmax, and a finite-difference gradient checker.
//!
//! Forward and backward passes are hand-written; no autograd framework is
//! involved. Networks are plain sequences of convolution layers.

mod checkpoint;
mod conv;
mod gradcheck;
mod planar;

pub use checkpoint::{
    load_checkpoint, read_checkpoint_bytes, save_checkpoint, write_checkpoint_bytes, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{gradient_check, squared_loss_with_grad, GradCheckConfig, GradCheckReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::scalar::Scalar;
use planar::Planar;

/// Activation applied after a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// max(x, 0) + 0.1 * min(x, 0)
    LeakyRelu01,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::LeakyRelu01 => leaky_relu(x),
            Activation::Linear => x,
        }
    }

    /// Derivative as a function of the pre-activation value.
    #[inline]
    fn derivative<S: Scalar>(self, pre: S) -> S {
        match self {
            Activation::LeakyRelu01 => {
                if pre >= S::zero() {
                    S::one()
                } else {
                    S::from_f64(0.1)
                }
            }
            Activation::Linear => S::one(),
        }
    }
}

/// Leaky rectifier with leak factor 0.1.
#[inline]
pub fn leaky_relu<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        x
    } else {
        S::from_f64(0.1) * x
    }
}

/// Shape and behaviour of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Square kernel side; must be odd so "same" padding is symmetric.
    pub kernel: usize,
    pub dilation: usize,
    pub activation: Activation,
}

impl ConvLayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 || self.kernel == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {}",
                self.kernel
            )));
        }
        if self.dilation == 0 {
            return Err(Error::Config("dilation must be >= 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of weights plus biases.
    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels
    }
}

/// Weights (layout `[out][in][k][k]`) and biases of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> LayerParams<S> {
    pub fn zeros(spec: &ConvLayerSpec) -> Self {
        LayerParams {
            weights: vec![
                S::zero();
                spec.out_channels * spec.in_channels * spec.kernel * spec.kernel
            ],
            bias: vec![S::zero(); spec.out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// All parameters of a network, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<S> {
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> NetworkParams<S> {
    pub fn zeros(specs: &[ConvLayerSpec]) -> Self {
        NetworkParams {
            layers: specs.iter().map(LayerParams::zeros).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.layers.iter().flat_map(|l| l.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.layers.iter_mut().flat_map(|l| l.iter_mut())
    }

    /// Elementwise accumulation; layouts must match.
    pub fn add_assign(&mut self, other: &NetworkParams<S>) {
        debug_assert_eq!(self.param_count(), other.param_count());
        for (a, &b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        for a in self.iter_mut() {
            *a *= factor;
        }
    }
}

/// Sequential convolutional network with fixed specs and owned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet<S> {
    specs: Vec<ConvLayerSpec>,
    params: NetworkParams<S>,
}

/// Intermediate activations kept for the backward pass.
pub struct NetTrace<S> {
    /// Input of each layer (post-activation of the previous one).
    layer_inputs: Vec<Planar<S>>,
    /// Pre-activation output of each layer.
    preacts: Vec<Planar<S>>,
}

impl<S: Scalar> ConvNet<S> {
    /// Builds a network with deterministic initialization: biases zero,
    /// weights uniform in `±1/sqrt(fan_in)` drawn from a seeded stream.
    pub fn new(specs: Vec<ConvLayerSpec>, seed: u64) -> Result<Self> {
        for spec in &specs {
            spec.validate()?;
        }
        for pair in specs.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Config(format!(
                    "layer chain mismatch: {} out vs {} in",
                    pair[0].out_channels, pair[1].in_channels
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = NetworkParams::zeros(&specs);
        for (spec, layer) in specs.iter().zip(params.layers.iter_mut()) {
            let fan_in = (spec.in_channels * spec.kernel * spec.kernel) as f64;
            let bound = 1.0 / fan_in.sqrt();
            for w in layer.weights.iter_mut() {
                *w = S::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound);
            }
        }
        Ok(ConvNet { specs, params })
    }

    pub fn from_parts(specs: Vec<ConvLayerSpec>, params: NetworkParams<S>) -> Result<Self> {
        if specs.len() != params.layers.len() {
            return Err(Error::Config("spec/param layer count mismatch".into()));
        }
        for (spec, layer) in specs.iter().zip(&params.layers) {
            spec.validate()?;
            if layer.param_count() != spec.param_count() {
                return Err(Error::Config("spec/param size mismatch".into()));
            }
        }
        Ok(ConvNet { specs, params })
    }

    pub fn specs(&self) -> &[ConvLayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &NetworkParams<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetworkParams<S> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn in_channels(&self) -> usize {
        self.specs[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.specs.last().unwrap().out_channels
    }

    fn check_input(&self, input: &Grid2D<S>) -> Result<()> {
        if input.channels() != self.in_channels() {
            return Err(Error::ShapeMismatch {
                context: "ConvNet::forward",
                expected: (input.height(), input.width(), self.in_channels()),
                got: input.shape(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Grid2D<S>) -> Result<Grid2D<S>> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let mut current = Planar::from_grid(input);
        for (spec, layer) in self.specs.iter().zip(&self.params.layers) {
            let mut out = Planar::zeros(spec.out_channels, h, w);
            conv::conv2d(&current, spec, layer, &mut out);
            for v in out.data.iter_mut() {
                *v = spec.activation.apply(*v);
            }
            current = out;
        }
        Ok(current.to_grid())
    }

    /// Forward pass that keeps every intermediate needed by [`Self::backward`].
    pub fn forward_trace(&self, input: &Grid2D<S>) -> Result<(Grid2D<S>, NetTrace<S>)> {
        self.check_input(input)?;
        let (h, w) = (input.height(), input.width());
        let mut layer_inputs = Vec::with_capacity(self.specs.len());
        let mut preacts = Vec::with_capacity(self.specs.len());
        let mut current = Planar::from_grid(input);
        for (spec, layer) in self.specs.iter().zip(&self.params.layers) {
            let mut pre = Planar::zeros(spec.out_channels, h, w);
            conv::conv2d(&current, spec, layer, &mut pre);
            let mut post = pre.clone();
            for v in post.data.iter_mut() {
                *v = spec.activation.apply(*v);
            }
            layer_inputs.push(current);
            preacts.push(pre);
            current = post;
        }
        Ok((
            current.to_grid(),
            NetTrace {
                layer_inputs,
                preacts,
            },
        ))
    }

    /// Reverse-mode pass. `grad_output` is dLoss/dOutput; returns parameter
    /// gradients and dLoss/dInput.
    pub fn backward(&self, trace: &NetTrace<S>, grad_output: &Grid2D<S>) -> (NetworkParams<S>, Grid2D<S>) {
        assert_eq!(grad_output.channels(), self.out_channels());
        let (h, w) = (grad_output.height(), grad_output.width());
        let mut grads = NetworkParams::zeros(&self.specs);
        let mut grad = Planar::from_grid(grad_output);
        for idx in (0..self.specs.len()).rev() {
            let spec = &self.specs[idx];
            let layer = &self.params.layers[idx];
            // through the activation
            let pre = &trace.preacts[idx];
            for (g, &p) in grad.data.iter_mut().zip(&pre.data) {
                *g = *g * spec.activation.derivative(p);
            }
            conv::conv2d_param_grad(&trace.layer_inputs[idx], &grad, spec, &mut grads.layers[idx]);
            let mut grad_in = Planar::zeros(spec.in_channels, h, w);
            conv::conv2d_input_grad(&grad, spec, layer, &mut grad_in);
            grad = grad_in;
        }
        (grads, grad.to_grid())
    }
}

/// Single-layer convolution with explicit parameters, mainly a unit-test
/// and fixture surface; networks use the same kernel internally.
pub fn conv2d_forward<S: Scalar>(
    input: &Grid2D<S>,
    spec: &ConvLayerSpec,
    params: &LayerParams<S>,
) -> Result<Grid2D<S>> {
    spec.validate()?;
    if input.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch {
            context: "conv2d_forward",
            expected: (input.height(), input.width(), spec.in_channels),
            got: input.shape(),
        });
    }
    if params.param_count() != spec.param_count() {
        return Err(Error::Config("conv2d_forward: spec/param size mismatch".into()));
    }
    let planar = Planar::from_grid(input);
    let mut out = Planar::zeros(spec.out_channels, input.height(), input.width());
    conv::conv2d(&planar, spec, params, &mut out);
    for v in out.data.iter_mut() {
        *v = spec.activation.apply(*v);
    }
    Ok(out.to_grid())
}

/// Numerically stable two-way softmax: per element,
/// `w_a = exp(a) / (exp(a) + exp(b))` and `w_b = 1 - w_a`.
pub fn pairwise_softmax<S: Scalar>(
    logit_a: &Grid2D<S>,
    logit_b: &Grid2D<S>,
) -> Result<(Grid2D<S>, Grid2D<S>)> {
    if logit_a.shape() != logit_b.shape() {
        return Err(Error::ShapeMismatch {
            context: "pairwise_softmax",
            expected: logit_a.shape(),
            got: logit_b.shape(),
        });
    }
    let mut w_a = logit_a.clone();
    let mut w_b = logit_b.clone();
    for (a, b) in w_a.values_mut().iter_mut().zip(w_b.values_mut()) {
        let m = if *a >= *b { *a } else { *b };
        let ea = (*a - m).exp();
        let eb = (*b - m).exp();
        let sum = ea + eb;
        *a = ea / sum;
        *b = eb / sum;
    }
    Ok((w_a, w_b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(cin: usize, cout: usize, k: usize, act: Activation) -> ConvLayerSpec {
        ConvLayerSpec {
            in_channels: cin,
            out_channels: cout,
            kernel: k,
            dilation: 1,
            activation: act,
        }
    }

    #[test]
    fn scalar_affine_conv() {
        // 1x1 input value 2, single 1x1 kernel weight 3, bias 1: output 7.
        let mut input = Grid2D::<f64>::new(1, 1, 1);
        input.set(0, 0, 0, 2.0);
        let s = spec(1, 1, 1, Activation::Linear);
        let params = LayerParams {
            weights: vec![3.0],
            bias: vec![1.0],
        };
        let out = conv2d_forward(&input, &s, &params).unwrap();
        assert_eq!(out.get(0, 0, 0), 7.0);
    }

    #[test]
    fn identity_kernel_preserves_input() {
        let mut input = Grid2D::<f64>::new(3, 4, 1);
        for (k, v) in input.values_mut().iter_mut().enumerate() {
            *v = (k as f64).sin();
        }
        let s = spec(1, 1, 3, Activation::Linear);
        let mut weights = vec![0.0; 9];
        weights[4] = 1.0; // center tap
        let params = LayerParams {
            weights,
            bias: vec![0.0],
        };
        let out = conv2d_forward(&input, &s, &params).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn all_ones_box_filter_with_zero_padding() {
        let input = Grid2D::<f64>::filled(3, 3, 1, 1.0);
        let s = spec(1, 1, 3, Activation::Linear);
        let params = LayerParams {
            weights: vec![1.0; 9],
            bias: vec![0.0],
        };
        let out = conv2d_forward(&input, &s, &params).unwrap();
        assert_eq!(out.get(1, 1, 0), 9.0); // full 3x3 support
        assert_eq!(out.get(0, 0, 0), 4.0); // corner sees a 2x2 window
        assert_eq!(out.get(0, 1, 0), 6.0); // edge sees a 2x3 window
    }

    #[test]
    fn dilation_expands_receptive_field() {
        // dilated 3x3 kernel with only the top-left tap set reads (i-2, j-2)
        let mut input = Grid2D::<f64>::new(5, 5, 1);
        input.set(0, 0, 0, 1.0);
        let s = ConvLayerSpec {
            dilation: 2,
            ..spec(1, 1, 3, Activation::Linear)
        };
        let mut weights = vec![0.0; 9];
        weights[0] = 1.0;
        let params = LayerParams {
            weights,
            bias: vec![0.0],
        };
        let out = conv2d_forward(&input, &s, &params).unwrap();
        assert_eq!(out.get(2, 2, 0), 1.0);
        assert_eq!(out.get(1, 1, 0), 0.0);
    }

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(1.0f64), 1.0);
        assert_eq!(leaky_relu(-1.0f64), -0.1);
        assert_eq!(leaky_relu(0.0f64), 0.0);
    }

    #[test]
    fn softmax_values() {
        let a = Grid2D::<f64>::filled(1, 1, 1, 0.0);
        let b = Grid2D::<f64>::filled(1, 1, 1, 0.0);
        let (wa, wb) = pairwise_softmax(&a, &b).unwrap();
        assert_eq!(wa.get(0, 0, 0), 0.5);
        assert_eq!(wb.get(0, 0, 0), 0.5);

        let a = Grid2D::<f64>::filled(1, 1, 1, 3.0f64.ln());
        let (wa, wb) = pairwise_softmax(&a, &b).unwrap();
        assert!((wa.get(0, 0, 0) - 0.75).abs() < 1e-12);
        assert!((wb.get(0, 0, 0) - 0.25).abs() < 1e-12);

        // extreme logits stay finite
        let a = Grid2D::<f64>::filled(1, 1, 1, 1000.0);
        let (wa, wb) = pairwise_softmax(&a, &b).unwrap();
        assert_eq!(wa.get(0, 0, 0), 1.0);
        assert_eq!(wb.get(0, 0, 0), 0.0);
    }

    #[test]
    fn softmax_shift_invariance_and_normalization() {
        let mut a = Grid2D::<f64>::new(4, 4, 2);
        let mut b = Grid2D::<f64>::new(4, 4, 2);
        for (k, v) in a.values_mut().iter_mut().enumerate() {
            *v = (k as f64 * 0.7).sin() * 5.0;
        }
        for (k, v) in b.values_mut().iter_mut().enumerate() {
            *v = (k as f64 * 1.3).cos() * 5.0;
        }
        let (wa, wb) = pairwise_softmax(&a, &b).unwrap();
        let shifted_a = a.map(|v| v + 11.5);
        let shifted_b = b.map(|v| v + 11.5);
        let (wa2, _) = pairwise_softmax(&shifted_a, &shifted_b).unwrap();
        for k in 0..wa.values().len() {
            let s = wa.values()[k] + wb.values()[k];
            assert!((s - 1.0).abs() < 1e-9);
            assert!(wa.values()[k] > 0.0 && wa.values()[k] <= 1.0);
            assert!((wa.values()[k] - wa2.values()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_net_is_linear_in_params() {
        let specs = vec![spec(2, 3, 3, Activation::Linear)];
        let mut net = ConvNet::<f64>::new(specs, 7).unwrap();
        // zero bias so scaling weights scales the output
        for b in net.params_mut().layers[0].bias.iter_mut() {
            *b = 0.0;
        }
        let mut input = Grid2D::<f64>::new(4, 5, 2);
        for (k, v) in input.values_mut().iter_mut().enumerate() {
            *v = (k as f64 * 0.31).sin();
        }
        let out1 = net.forward(&input).unwrap();
        for w in net.params_mut().layers[0].weights.iter_mut() {
            *w *= 2.5;
        }
        let out2 = net.forward(&input).unwrap();
        for (a, b) in out1.values().iter().zip(out2.values()) {
            assert!((a * 2.5 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_deterministic() {
        let specs = vec![spec(2, 3, 3, Activation::LeakyRelu01)];
        let a = ConvNet::<f64>::new(specs.clone(), 42).unwrap();
        let b = ConvNet::<f64>::new(specs, 42).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn chain_mismatch_rejected() {
        let specs = vec![
            spec(2, 3, 3, Activation::LeakyRelu01),
            spec(4, 1, 3, Activation::Linear),
        ];
        assert!(ConvNet::<f64>::new(specs, 0).is_err());
    }
}
