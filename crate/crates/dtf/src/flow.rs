//! Scene flow fields: optical flow plus disparity at two times.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::mask::{MaskKind, PixelMask};
use crate::scalar::Scalar;

/// Temporal direction of a field, always anchored at the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Motion from t to t+1.
    Forward,
    /// Motion from t to t-1.
    Backward,
}

impl FlowDirection {
    pub fn flipped(self) -> FlowDirection {
        match self {
            FlowDirection::Forward => FlowDirection::Backward,
            FlowDirection::Backward => FlowDirection::Forward,
        }
    }

    /// Short tag used in file names ("fw" / "bw").
    pub fn tag(self) -> &'static str {
        match self {
            FlowDirection::Forward => "fw",
            FlowDirection::Backward => "bw",
        }
    }
}

impl fmt::Display for FlowDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlowDirection::Forward => "forward",
            FlowDirection::Backward => "backward",
        })
    }
}

/// Channel layout of a [`SceneFlowField`] grid.
pub const CH_U: usize = 0;
pub const CH_V: usize = 1;
pub const CH_D0: usize = 2;
pub const CH_D1: usize = 3;
pub const FLOW_CHANNELS: usize = 4;

/// Per-pixel 4-channel scene flow in image space.
///
/// Channels: horizontal flow `u`, vertical flow `v`, disparity `d0` at the
/// reference time, and disparity `d1` at the target time registered to the
/// reference pixel. Disparities are stored positive (left-image convention).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFlowField<S> {
    grid: Grid2D<S>,
    direction: FlowDirection,
}

impl<S: Scalar> SceneFlowField<S> {
    pub fn new(grid: Grid2D<S>, direction: FlowDirection) -> Result<Self> {
        if grid.channels() != FLOW_CHANNELS {
            return Err(Error::ShapeMismatch {
                context: "SceneFlowField::new",
                expected: (grid.height(), grid.width(), FLOW_CHANNELS),
                got: grid.shape(),
            });
        }
        Ok(SceneFlowField { grid, direction })
    }

    pub fn zeros(height: usize, width: usize, direction: FlowDirection) -> Self {
        SceneFlowField {
            grid: Grid2D::new(height, width, FLOW_CHANNELS),
            direction,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D<S> {
        &self.grid
    }

    #[inline]
    pub fn grid_mut(&mut self) -> &mut Grid2D<S> {
        &mut self.grid
    }

    pub fn into_grid(self) -> Grid2D<S> {
        self.grid
    }

    #[inline]
    pub fn direction(&self) -> FlowDirection {
        self.direction
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    /// The 4-vector (u, v, d0, d1) of one pixel.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[S] {
        self.grid.pixel(i, j)
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [S] {
        self.grid.pixel_mut(i, j)
    }

    pub fn same_shape(&self, other: &SceneFlowField<S>) -> bool {
        self.grid.shape() == other.grid.shape()
    }

    pub fn cast<T: Scalar>(&self) -> SceneFlowField<T> {
        SceneFlowField {
            grid: self.grid.cast(),
            direction: self.direction,
        }
    }

    /// Pixels whose stored disparities are not strictly positive.
    ///
    /// Such pixels can legitimately appear in derived fields (e.g. after
    /// baseline inversion); they are reported, never clamped.
    pub fn nonpositive_disparity_mask(&self) -> PixelMask {
        let (h, w) = (self.height(), self.width());
        let mut mask = PixelMask::filled(h, w, MaskKind::Valid, false);
        for i in 0..h {
            for j in 0..w {
                let px = self.pixel(i, j);
                if px[CH_D0] <= S::zero() || px[CH_D1] <= S::zero() {
                    mask.set(i, j, true);
                }
            }
        }
        mask
    }
}
