//! KITTI community PNG encodings for disparity, flow, masks, and images.
//!
//! Disparity: 16-bit single channel, `stored = round(d * 256)`, 0 marks an
//! invalid pixel. Flow: 16-bit RGB with `stored = round(f * 64 + 2^15)` for
//! u and v and a 0/1 validity bit in the third channel. Both invert exactly
//! up to the quantization step.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::grid::Grid2D;
use crate::mask::{MaskKind, PixelMask};

/// Disparity quantization: 1/256 px per step.
pub const DISPARITY_SCALE: f64 = 256.0;
/// Flow quantization: 1/64 px per step around the 2^15 zero point.
pub const FLOW_SCALE: f64 = 64.0;
pub const FLOW_OFFSET: f64 = 32768.0;

/// Encodes one disparity value. Valid inputs lie in (0, 256); values that
/// would collide with the invalid marker 0 or overflow 16 bits are errors.
pub fn encode_disparity(d: f64) -> std::result::Result<u16, String> {
    if !d.is_finite() {
        return Err(format!("disparity {d} is not finite"));
    }
    let stored = (d * DISPARITY_SCALE).round();
    if stored <= 0.0 {
        return Err(format!("disparity {d} quantizes to the invalid marker 0"));
    }
    if stored > u16::MAX as f64 {
        return Err(format!("disparity {d} overflows 16 bits"));
    }
    Ok(stored as u16)
}

/// Decodes a stored disparity; `None` is the invalid marker.
pub fn decode_disparity(stored: u16) -> Option<f64> {
    if stored == 0 {
        None
    } else {
        Some(stored as f64 / DISPARITY_SCALE)
    }
}

/// Encodes one flow component; valid inputs satisfy |f| < 512.
pub fn encode_flow(f: f64) -> std::result::Result<u16, String> {
    if !f.is_finite() {
        return Err(format!("flow {f} is not finite"));
    }
    let stored = (f * FLOW_SCALE + FLOW_OFFSET).round();
    if !(0.0..=u16::MAX as f64).contains(&stored) {
        return Err(format!("flow {f} overflows the 16-bit encoding"));
    }
    Ok(stored as u16)
}

pub fn decode_flow(stored: u16) -> f64 {
    (stored as f64 - FLOW_OFFSET) / FLOW_SCALE
}

fn codec_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn save_image(path: &Path, img: DynamicImage) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a single-channel disparity grid as 16-bit PNG.
pub fn write_disparity_png(path: &Path, grid: &Grid2D<f64>, valid: &PixelMask) -> Result<()> {
    let (h, w, c) = grid.shape();
    if c != 1 || valid.height() != h || valid.width() != w {
        return Err(codec_err(path, "disparity grid must be 1-channel and match the mask"));
    }
    let mut img = ImageBuffer::<Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let stored = if valid.get(i, j) {
                encode_disparity(grid.get(i, j, 0)).map_err(|reason| codec_err(path, reason))?
            } else {
                0
            };
            img.put_pixel(j as u32, i as u32, Luma([stored]));
        }
    }
    save_image(path, DynamicImage::ImageLuma16(img))
}

/// Reads a 16-bit disparity PNG; invalid pixels decode to 0 with a false
/// mask bit.
pub fn read_disparity_png(path: &Path) -> Result<(Grid2D<f64>, PixelMask)> {
    let img = match open_image(path)? {
        DynamicImage::ImageLuma16(img) => img,
        _ => return Err(codec_err(path, "expected a 16-bit single-channel PNG")),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut grid = Grid2D::new(h, w, 1);
    let mut valid = PixelMask::filled(h, w, MaskKind::Valid, false);
    for i in 0..h {
        for j in 0..w {
            let stored = img.get_pixel(j as u32, i as u32).0[0];
            if let Some(d) = decode_disparity(stored) {
                grid.set(i, j, 0, d);
                valid.set(i, j, true);
            }
        }
    }
    Ok((grid, valid))
}

/// Writes a 2-channel (u, v) flow grid as 16-bit RGB PNG.
pub fn write_flow_png(path: &Path, grid: &Grid2D<f64>, valid: &PixelMask) -> Result<()> {
    let (h, w, c) = grid.shape();
    if c != 2 || valid.height() != h || valid.width() != w {
        return Err(codec_err(path, "flow grid must be 2-channel and match the mask"));
    }
    let mut img = ImageBuffer::<Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let px = if valid.get(i, j) {
                let u = encode_flow(grid.get(i, j, 0)).map_err(|reason| codec_err(path, reason))?;
                let v = encode_flow(grid.get(i, j, 1)).map_err(|reason| codec_err(path, reason))?;
                [u, v, 1]
            } else {
                [FLOW_OFFSET as u16, FLOW_OFFSET as u16, 0]
            };
            img.put_pixel(j as u32, i as u32, Rgb(px));
        }
    }
    save_image(path, DynamicImage::ImageRgb16(img))
}

/// Reads a 16-bit flow PNG; invalid pixels decode to 0 with a false mask bit.
pub fn read_flow_png(path: &Path) -> Result<(Grid2D<f64>, PixelMask)> {
    let img = match open_image(path)? {
        DynamicImage::ImageRgb16(img) => img,
        _ => return Err(codec_err(path, "expected a 16-bit three-channel PNG")),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut grid = Grid2D::new(h, w, 2);
    let mut valid = PixelMask::filled(h, w, MaskKind::Valid, false);
    for i in 0..h {
        for j in 0..w {
            let Rgb([u, v, ok]) = *img.get_pixel(j as u32, i as u32);
            if ok != 0 {
                grid.set(i, j, 0, decode_flow(u));
                grid.set(i, j, 1, decode_flow(v));
                valid.set(i, j, true);
            }
        }
    }
    Ok((grid, valid))
}

/// Writes a boolean mask as 8-bit PNG (255 = true).
pub fn write_mask_png(path: &Path, mask: &PixelMask) -> Result<()> {
    let (h, w) = (mask.height(), mask.width());
    let mut img = ImageBuffer::<Luma<u8>, Vec<u8>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            img.put_pixel(j as u32, i as u32, Luma([if mask.get(i, j) { 255 } else { 0 }]));
        }
    }
    save_image(path, DynamicImage::ImageLuma8(img))
}

pub fn read_mask_png(path: &Path, kind: MaskKind) -> Result<PixelMask> {
    let img = open_image(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut mask = PixelMask::filled(h, w, kind, false);
    for i in 0..h {
        for j in 0..w {
            mask.set(i, j, img.get_pixel(j as u32, i as u32).0[0] != 0);
        }
    }
    Ok(mask)
}

/// Writes a [0, 1] grayscale image grid as 8-bit PNG.
pub fn write_gray_png(path: &Path, grid: &Grid2D<f64>) -> Result<()> {
    let (h, w, c) = grid.shape();
    if c != 1 {
        return Err(codec_err(path, "image grid must be 1-channel"));
    }
    let mut img = ImageBuffer::<Luma<u8>, Vec<u8>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let v = (grid.get(i, j, 0).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(j as u32, i as u32, Luma([v]));
        }
    }
    save_image(path, DynamicImage::ImageLuma8(img))
}

pub fn read_gray_png(path: &Path) -> Result<Grid2D<f64>> {
    let img = open_image(path)?.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut grid = Grid2D::new(h, w, 1);
    for i in 0..h {
        for j in 0..w {
            grid.set(i, j, 0, img.get_pixel(j as u32, i as u32).0[0] as f64 / 255.0);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disparity_codec_values() {
        assert_eq!(encode_disparity(1.0).unwrap(), 256);
        assert_eq!(decode_disparity(256), Some(1.0));
        assert_eq!(decode_disparity(0), None);
        // too small: collides with the invalid marker
        assert!(encode_disparity(0.001).is_err());
        assert!(encode_disparity(256.0).is_err());
        assert!(encode_disparity(f64::NAN).is_err());
    }

    #[test]
    fn flow_codec_values() {
        assert_eq!(encode_flow(0.0).unwrap(), 32768);
        assert_eq!(decode_flow(32768), 0.0);
        assert_eq!(encode_flow(-2.5).unwrap(), 32608);
        assert_eq!(decode_flow(32608), -2.5);
        assert!(encode_flow(512.0).is_err());
        assert!(encode_flow(-512.1).is_err());
    }

    #[test]
    fn disparity_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("disp.png");
        let mut grid = Grid2D::new(3, 4, 1);
        let mut valid = PixelMask::filled(3, 4, MaskKind::Valid, true);
        for i in 0..3 {
            for j in 0..4 {
                grid.set(i, j, 0, 1.0 + (i * 4 + j) as f64 * 3.77);
            }
        }
        valid.set(1, 2, false);
        write_disparity_png(&path, &grid, &valid).unwrap();
        let (read, read_valid) = read_disparity_png(&path).unwrap();
        assert_eq!(read_valid, valid.clone().with_kind(MaskKind::Valid));
        for i in 0..3 {
            for j in 0..4 {
                if valid.get(i, j) {
                    assert!((read.get(i, j, 0) - grid.get(i, j, 0)).abs() <= 0.5 / 256.0);
                }
            }
        }
    }

    #[test]
    fn flow_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.png");
        let mut grid = Grid2D::new(2, 5, 2);
        let mut valid = PixelMask::filled(2, 5, MaskKind::Valid, true);
        for (k, v) in grid.values_mut().iter_mut().enumerate() {
            *v = (k as f64 - 5.0) * 17.3;
        }
        valid.set(0, 3, false);
        write_flow_png(&path, &grid, &valid).unwrap();
        let (read, read_valid) = read_flow_png(&path).unwrap();
        assert_eq!(read_valid, valid);
        for i in 0..2 {
            for j in 0..5 {
                if valid.get(i, j) {
                    for c in 0..2 {
                        assert!((read.get(i, j, c) - grid.get(i, j, c)).abs() <= 0.5 / 64.0);
                    }
                } else {
                    assert_eq!(read.get(i, j, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn mask_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mut mask = PixelMask::filled(4, 4, MaskKind::Noc, false);
        mask.set(0, 0, true);
        mask.set(3, 2, true);
        write_mask_png(&path, &mask).unwrap();
        let read = read_mask_png(&path, MaskKind::Noc).unwrap();
        assert_eq!(read, mask);
    }

    #[test]
    fn non_16bit_disparity_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not16.png");
        let mask = PixelMask::filled(2, 2, MaskKind::Valid, true);
        write_mask_png(&path, &mask).unwrap();
        assert!(matches!(
            read_disparity_png(&path),
            Err(Error::Codec { .. })
        ));
    }
}
