//! Deep temporal fusion of scene flow.
//!
//! A dual-frame scene flow estimator produces forward (t to t+1) and
//! backward (t to t-1) fields anchored at a common reference frame. This
//! crate turns the backward field into a forward prediction with a small
//! learned inversion network, then fuses both candidates by per-pixel
//! weighted averaging. The fusion weights are trained without occlusion
//! labels yet behave as soft occlusion maps, which is where the accuracy
//! gains in occluded regions come from.
//!
//! Modules:
//! - [`grid`], [`mask`], [`flow`], [`sample`]: grid, mask, and field types
//! - [`metrics`]: KITTI-style outlier rates per component and region
//! - [`net`]: convolution substrate with hand-written gradients
//! - [`invert`]: learned temporal inversion + constant-linear baseline
//! - [`fuse`]: fusion variants, weighted averaging, oracle bound
//! - [`estimate`]: pluggable estimator interface and a noisy oracle
//! - [`synth`]: analytic multi-frame stereo scene generator
//! - [`io`]: KITTI-format PNG persistence and dataset manifests
//! - [`train`]: losses, Adam, schedules, and training procedures
//! - [`viz`]: flow color wheel, error maps, occlusion map export
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the shipped
//! CLI and checkpoint format use `f64`.

pub mod error;
pub mod estimate;
pub mod flow;
pub mod fuse;
pub mod grid;
pub mod invert;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod net;
pub mod sample;
pub mod scalar;
pub mod synth;
pub mod train;
pub mod viz;

pub use error::{Error, ErrorCategory, Result};
pub use flow::{FlowDirection, SceneFlowField};
pub use grid::{normalized_coordinate_grid, Grid2D};
pub use mask::{derive_occ_mask, MaskKind, PixelMask};
pub use sample::{DirectionalGt, FrameTripletSample};
pub use scalar::Scalar;

/// Concrete aliases for the two supported scalar widths.
pub type Grid32 = Grid2D<f32>;
pub type Grid64 = Grid2D<f64>;
pub type Field32 = SceneFlowField<f32>;
pub type Field64 = SceneFlowField<f64>;
pub type Sample64 = FrameTripletSample<f64>;
