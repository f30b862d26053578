//! Temporal inversion of scene flow: a learnable inverter network and the
//! constant-linear baseline.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField, CH_D0, CH_D1, CH_U, CH_V, FLOW_CHANNELS};
use crate::grid::{normalized_coordinate_grid, Grid2D};
use crate::net::{self, Activation, ConvLayerSpec, ConvNet};
use crate::scalar::Scalar;

/// Architecture tag stored in inverter checkpoints.
pub const INVERTER_TAG: &str = "dtf-inverter-v1";

/// Network input: the 4 field channels plus normalized x/y coordinates.
pub const INVERTER_IN_CHANNELS: usize = FLOW_CHANNELS + 2;

/// Compact inversion network: four 3x3 layers and a final 7x7 layer with
/// feature widths 16, 16, 16, 16, 4. Hidden layers use leaky-ReLU, the head
/// is linear. The coordinate channels give it spatial variance so it can
/// reason in (hypothetical) 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct InverterNetwork<S> {
    net: ConvNet<S>,
}

impl<S: Scalar> InverterNetwork<S> {
    pub fn layer_specs() -> Vec<ConvLayerSpec> {
        let hidden = |cin: usize| ConvLayerSpec {
            in_channels: cin,
            out_channels: 16,
            kernel: 3,
            dilation: 1,
            activation: Activation::LeakyRelu01,
        };
        vec![
            hidden(INVERTER_IN_CHANNELS),
            hidden(16),
            hidden(16),
            hidden(16),
            ConvLayerSpec {
                in_channels: 16,
                out_channels: FLOW_CHANNELS,
                kernel: 7,
                dilation: 1,
                activation: Activation::Linear,
            },
        ]
    }

    /// Deterministic fresh network for a seed.
    pub fn new(seed: u64) -> Self {
        let net = ConvNet::new(Self::layer_specs(), seed).expect("fixed architecture is valid");
        InverterNetwork { net }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn net(&self) -> &ConvNet<S> {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut ConvNet<S> {
        &mut self.net
    }

    /// Turns a backward field into a forward prediction.
    pub fn invert(&self, backward: &SceneFlowField<S>) -> Result<SceneFlowField<S>> {
        if backward.direction() != FlowDirection::Backward {
            return Err(Error::DirectionMismatch {
                context: "InverterNetwork::invert",
                expected: FlowDirection::Backward,
                got: backward.direction(),
            });
        }
        let coords = normalized_coordinate_grid(backward.height(), backward.width());
        self.invert_with_coords(backward, &coords)
    }

    /// Same as [`Self::invert`] but with caller-supplied coordinate
    /// channels, used to probe translation equivariance.
    pub fn invert_with_coords(
        &self,
        backward: &SceneFlowField<S>,
        coords: &Grid2D<S>,
    ) -> Result<SceneFlowField<S>> {
        let input = Grid2D::concat_channels(&[backward.grid(), coords])?;
        let out = self.net.forward(&input)?;
        SceneFlowField::new(out, FlowDirection::Forward)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        net::save_checkpoint(path, INVERTER_TAG, &self.net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = net::load_checkpoint::<S>(path, Some(INVERTER_TAG))?;
        if ckpt.net.specs() != Self::layer_specs().as_slice() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "layer shapes do not match the inverter architecture".into(),
            });
        }
        Ok(InverterNetwork { net: ckpt.net })
    }

    pub fn from_net(net: ConvNet<S>) -> Result<Self> {
        if net.specs() != Self::layer_specs().as_slice() {
            return Err(Error::Config(
                "network does not match the inverter architecture".into(),
            ));
        }
        Ok(InverterNetwork { net })
    }
}

/// Constant-motion baseline: optical flow and the disparity change are
/// negated, the reference disparity passes through.
///
/// `u' = -u`, `v' = -v`, `d0' = d0`, `d1' = 2 d0 - d1`. The output carries
/// the flipped direction tag. `d1'` may come out non-positive for large
/// disparity changes; such pixels are kept as-is (see
/// [`SceneFlowField::nonpositive_disparity_mask`]) so they can be counted
/// as the outliers they are.
pub fn constant_linear_invert<S: Scalar>(field: &SceneFlowField<S>) -> SceneFlowField<S> {
    let mut grid = field.grid().clone();
    let two = S::from_f64(2.0);
    for px in grid.values_mut().chunks_exact_mut(FLOW_CHANNELS) {
        px[CH_U] = -px[CH_U];
        px[CH_V] = -px[CH_V];
        px[CH_D1] = two * px[CH_D0] - px[CH_D1];
    }
    SceneFlowField::new(grid, field.direction().flipped()).expect("channel count preserved")
}
