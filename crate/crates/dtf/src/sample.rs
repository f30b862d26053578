//! Multi-frame stereo samples with ground truth.

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField};
use crate::grid::Grid2D;
use crate::mask::{derive_occ_mask, PixelMask};
use crate::scalar::Scalar;

/// Frame index within a triplet: 0 = t-1, 1 = t (reference), 2 = t+1.
pub const FRAME_PREV: usize = 0;
pub const FRAME_REF: usize = 1;
pub const FRAME_NEXT: usize = 2;

/// Ground truth for one temporal direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalGt<S> {
    pub field: SceneFlowField<S>,
    pub valid: PixelMask,
    pub noc: PixelMask,
}

impl<S: Scalar> DirectionalGt<S> {
    /// Occluded-only region (valid minus noc).
    pub fn occ(&self) -> Result<PixelMask> {
        derive_occ_mask(&self.valid, &self.noc)
    }

    pub fn cast<T: Scalar>(&self) -> DirectionalGt<T> {
        DirectionalGt {
            field: self.field.cast(),
            valid: self.valid.clone(),
            noc: self.noc.clone(),
        }
    }
}

/// Three stereo image pairs (t-1, t, t+1) with bi-directional ground truth
/// anchored at the reference frame (left image at t).
///
/// Backward ground truth is optional; loaders flag its absence rather than
/// fail so forward-only datasets remain usable.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTripletSample<S> {
    pub id: String,
    /// Left images at t-1, t, t+1; values in [0, 1].
    pub left: [Grid2D<S>; 3],
    /// Right images at t-1, t, t+1.
    pub right: [Grid2D<S>; 3],
    pub forward: DirectionalGt<S>,
    pub backward: Option<DirectionalGt<S>>,
}

impl<S: Scalar> FrameTripletSample<S> {
    pub fn height(&self) -> usize {
        self.left[FRAME_REF].height()
    }

    pub fn width(&self) -> usize {
        self.left[FRAME_REF].width()
    }

    /// Ground truth for a direction, erroring when backward gt is absent.
    pub fn gt(&self, direction: FlowDirection) -> Result<&DirectionalGt<S>> {
        match direction {
            FlowDirection::Forward => Ok(&self.forward),
            FlowDirection::Backward => self.backward.as_ref().ok_or(Error::MissingFile {
                what: "backward ground truth".into(),
                sample: self.id.clone(),
                path: Default::default(),
            }),
        }
    }

    pub fn has_backward_gt(&self) -> bool {
        self.backward.is_some()
    }

    /// Checks that all grids and masks share the reference spatial shape and
    /// that field directions match their slot.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        let check_grid = |g: &Grid2D<S>| -> Result<()> {
            if g.height() != h || g.width() != w {
                return Err(Error::ShapeMismatch {
                    context: "FrameTripletSample::validate",
                    expected: (h, w, g.channels()),
                    got: g.shape(),
                });
            }
            Ok(())
        };
        for g in self.left.iter().chain(self.right.iter()) {
            check_grid(g)?;
        }
        let check_gt = |gt: &DirectionalGt<S>, dir: FlowDirection| -> Result<()> {
            check_grid(gt.field.grid())?;
            if gt.field.direction() != dir {
                return Err(Error::DirectionMismatch {
                    context: "FrameTripletSample::validate",
                    expected: dir,
                    got: gt.field.direction(),
                });
            }
            if gt.valid.height() != h
                || gt.valid.width() != w
                || gt.noc.height() != h
                || gt.noc.width() != w
            {
                return Err(Error::ShapeMismatch {
                    context: "FrameTripletSample::validate",
                    expected: (h, w, 1),
                    got: (gt.valid.height(), gt.valid.width(), 1),
                });
            }
            Ok(())
        };
        check_gt(&self.forward, FlowDirection::Forward)?;
        if let Some(bw) = &self.backward {
            check_gt(bw, FlowDirection::Backward)?;
        }
        Ok(())
    }

    pub fn cast<T: Scalar>(&self) -> FrameTripletSample<T> {
        FrameTripletSample {
            id: self.id.clone(),
            left: [
                self.left[0].cast(),
                self.left[1].cast(),
                self.left[2].cast(),
            ],
            right: [
                self.right[0].cast(),
                self.right[1].cast(),
                self.right[2].cast(),
            ],
            forward: self.forward.cast(),
            backward: self.backward.as_ref().map(|b| b.cast()),
        }
    }
}
