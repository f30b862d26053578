//! Dense 2D grids with per-pixel channel vectors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major grid of per-pixel channel vectors.
///
/// Element `(i, j, c)` lives at `(i * width + j) * channels + c`, i.e. the
/// channels of one pixel are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<S> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<S>,
}

impl<S: Scalar> Grid2D<S> {
    /// Zero-filled grid. Dimensions must all be at least 1.
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        assert!(
            height >= 1 && width >= 1 && channels >= 1,
            "grid dimensions must be >= 1, got {}x{}x{}",
            height,
            width,
            channels
        );
        Grid2D {
            height,
            width,
            channels,
            data: vec![S::zero(); height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: S) -> Self {
        let mut g = Self::new(height, width, channels);
        g.data.fill(value);
        g
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                context: "Grid2D::from_vec",
                expected: (height, width, channels),
                got: (data.len(), 1, 1),
            });
        }
        assert!(height >= 1 && width >= 1 && channels >= 1);
        Ok(Grid2D {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)` triple.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn same_spatial_shape<T>(&self, other: &Grid2D<T>) -> bool {
        self.height == other.height && self.width == other.width
    }

    #[inline]
    fn index(&self, i: usize, j: usize, c: usize) -> usize {
        debug_assert!(i < self.height && j < self.width && c < self.channels);
        (i * self.width + j) * self.channels + c
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> S {
        self.data[self.index(i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, value: S) {
        let idx = self.index(i, j, c);
        self.data[idx] = value;
    }

    /// The channel vector of one pixel.
    #[inline]
    pub fn pixel(&self, i: usize, j: usize) -> &[S] {
        let base = (i * self.width + j) * self.channels;
        &self.data[base..base + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [S] {
        let base = (i * self.width + j) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Grid2D {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Grid2D<T> {
        Grid2D {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        }
    }

    /// Concatenate along the channel axis. All inputs must share the spatial shape.
    pub fn concat_channels(parts: &[&Grid2D<S>]) -> Result<Grid2D<S>> {
        assert!(!parts.is_empty());
        let (h, w) = (parts[0].height, parts[0].width);
        for p in parts {
            if p.height != h || p.width != w {
                return Err(Error::ShapeMismatch {
                    context: "Grid2D::concat_channels",
                    expected: (h, w, p.channels),
                    got: p.shape(),
                });
            }
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut out = Grid2D::new(h, w, channels);
        for i in 0..h {
            for j in 0..w {
                let px = out.pixel_mut(i, j);
                let mut offset = 0;
                for p in parts {
                    px[offset..offset + p.channels].copy_from_slice(p.pixel(i, j));
                    offset += p.channels;
                }
            }
        }
        Ok(out)
    }

    /// Extract a contiguous channel range into a new grid.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Grid2D<S> {
        assert!(range.end <= self.channels && range.start < range.end);
        let channels = range.end - range.start;
        let mut out = Grid2D::new(self.height, self.width, channels);
        for i in 0..self.height {
            for j in 0..self.width {
                let src = self.pixel(i, j);
                out.pixel_mut(i, j).copy_from_slice(&src[range.clone()]);
            }
        }
        out
    }

    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize, &[S])> {
        let w = self.width;
        let c = self.channels;
        self.data
            .chunks_exact(c)
            .enumerate()
            .map(move |(p, px)| (p / w, p % w, px))
    }
}

/// Normalized spatial coordinates in `[-1, 1]`.
///
/// Channel 0 is x (increasing rightward), channel 1 is y (increasing
/// downward): `x(j) = -1 + 2 j / (W - 1)`, and symmetrically for y. A
/// dimension of size 1 maps to coordinate 0.
pub fn normalized_coordinate_grid<S: Scalar>(height: usize, width: usize) -> Grid2D<S> {
    let mut grid = Grid2D::new(height, width, 2);
    let coord = |idx: usize, size: usize| -> f64 {
        if size <= 1 {
            0.0
        } else {
            -1.0 + 2.0 * idx as f64 / (size - 1) as f64
        }
    };
    for i in 0..height {
        let y = coord(i, height);
        for j in 0..width {
            let x = coord(j, width);
            let px = grid.pixel_mut(i, j);
            px[0] = S::from_f64(x);
            px[1] = S::from_f64(y);
        }
    }
    grid
}
