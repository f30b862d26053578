//! Boolean pixel masks for validity and occlusion regions.

use crate::error::{Error, Result};

/// What a mask's `true` cells mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Pixels carrying usable (ground-truth) data.
    Valid,
    /// Non-occluded pixels.
    Noc,
    /// Occluded-only pixels (valid minus noc).
    Occ,
}

/// Boolean grid over the image plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    kind: MaskKind,
    data: Vec<bool>,
}

impl PixelMask {
    pub fn filled(height: usize, width: usize, kind: MaskKind, value: bool) -> Self {
        assert!(height >= 1 && width >= 1);
        PixelMask {
            height,
            width,
            kind,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, kind: MaskKind, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                context: "PixelMask::from_vec",
                expected: (height, width, 1),
                got: (data.len(), 1, 1),
            });
        }
        Ok(PixelMask {
            height,
            width,
            kind,
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
    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.width + j] = value;
    }

    #[inline]
    pub fn values(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn same_shape(&self, other: &PixelMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    /// Pointwise AND, keeping `self`'s kind.
    pub fn and(&self, other: &PixelMask) -> Result<PixelMask> {
        self.check_shape(other, "PixelMask::and")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(PixelMask {
            height: self.height,
            width: self.width,
            kind: self.kind,
            data,
        })
    }

    pub fn not(&self, kind: MaskKind) -> PixelMask {
        PixelMask {
            height: self.height,
            width: self.width,
            kind,
            data: self.data.iter().map(|&v| !v).collect(),
        }
    }

    pub fn with_kind(mut self, kind: MaskKind) -> PixelMask {
        self.kind = kind;
        self
    }

    fn check_shape(&self, other: &PixelMask, context: &'static str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                context,
                expected: (self.height, self.width, 1),
                got: (other.height, other.width, 1),
            });
        }
        Ok(())
    }
}

/// Occluded-only region: `valid AND NOT noc`, pointwise.
pub fn derive_occ_mask(valid: &PixelMask, noc: &PixelMask) -> Result<PixelMask> {
    if !valid.same_shape(noc) {
        return Err(Error::ShapeMismatch {
            context: "derive_occ_mask",
            expected: (valid.height, valid.width, 1),
            got: (noc.height, noc.width, 1),
        });
    }
    let data = valid
        .data
        .iter()
        .zip(&noc.data)
        .map(|(&v, &n)| v && !n)
        .collect();
    Ok(PixelMask {
        height: valid.height,
        width: valid.width,
        kind: MaskKind::Occ,
        data,
    })
}
