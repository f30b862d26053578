//! Channel-planar tensors used inside the network code.
//!
//! Grids store pixels interleaved; convolutions want one contiguous plane
//! per channel, so layers convert at the network boundary and stay planar
//! in between.

use crate::grid::Grid2D;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Planar<S> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// `data[c * height * width ..]` is the plane of channel `c`.
    pub data: Vec<S>,
}

impl<S: Scalar> Planar<S> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Planar {
            channels,
            height,
            width,
            data: vec![S::zero(); channels * height * width],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[S] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn from_grid(grid: &Grid2D<S>) -> Self {
        let (h, w, c) = grid.shape();
        let mut out = Planar::zeros(c, h, w);
        let n = h * w;
        for (p, px) in grid.values().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                out.data[ch * n + p] = v;
            }
        }
        out
    }

    pub fn to_grid(&self) -> Grid2D<S> {
        let mut grid = Grid2D::new(self.height, self.width, self.channels);
        let n = self.height * self.width;
        let c = self.channels;
        let values = grid.values_mut();
        for ch in 0..c {
            let plane = &self.data[ch * n..(ch + 1) * n];
            for (p, &v) in plane.iter().enumerate() {
                values[p * c + ch] = v;
            }
        }
        grid
    }
}
