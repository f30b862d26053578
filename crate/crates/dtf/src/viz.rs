//! Visualization: flow color wheel, outlier maps, occlusion maps.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::flow::{SceneFlowField, CH_U, CH_V};
use crate::fuse::FusionWeights;
use crate::grid::Grid2D;
use crate::mask::PixelMask;
use crate::scalar::Scalar;

/// HSV to RGB with s, v in [0, 1] and h in degrees.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h.rem_euclid(360.0)) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}

/// Optical-flow color wheel: hue encodes direction, saturation encodes
/// magnitude.
///
/// Magnitudes are normalized by `max_magnitude` when given, else by the
/// field's own maximum; the value used is returned so callers can record it
/// (typically in the output file name). Invalid pixels render black.
pub fn flow_color_image<S: Scalar>(
    field: &SceneFlowField<S>,
    valid: Option<&PixelMask>,
    max_magnitude: Option<f64>,
) -> (RgbImage, f64) {
    let (h, w) = (field.height(), field.width());
    let mut observed = 0.0f64;
    for (_, _, px) in field.grid().iter_pixels() {
        let mag = (px[CH_U].as_f64().powi(2) + px[CH_V].as_f64().powi(2)).sqrt();
        observed = observed.max(mag);
    }
    let norm = max_magnitude.unwrap_or(observed).max(1e-9);
    let mut img = RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            if let Some(mask) = valid {
                if !mask.get(i, j) {
                    img.put_pixel(j as u32, i as u32, Rgb([0, 0, 0]));
                    continue;
                }
            }
            let px = field.pixel(i, j);
            let (u, v) = (px[CH_U].as_f64(), px[CH_V].as_f64());
            let angle = v.atan2(u).to_degrees();
            let sat = ((u * u + v * v).sqrt() / norm).clamp(0.0, 1.0);
            img.put_pixel(j as u32, i as u32, Rgb(hsv_to_rgb(angle, sat, 1.0)));
        }
    }
    (img, norm)
}

/// Outlier map rendering: green inliers, magenta outliers, black where the
/// ground truth is invalid.
pub fn error_map_image(outliers: &PixelMask, valid: &PixelMask) -> RgbImage {
    let (h, w) = (outliers.height(), outliers.width());
    let mut img = RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let color = if !valid.get(i, j) {
                [0, 0, 0]
            } else if outliers.get(i, j) {
                [255, 0, 255]
            } else {
                [0, 200, 0]
            };
            img.put_pixel(j as u32, i as u32, Rgb(color));
        }
    }
    img
}

/// Exports one weight channel as an 8-bit occlusion map:
/// 0 = forward preferred, 255 = backward preferred.
pub fn occlusion_map_image<S: Scalar>(w_bw: &Grid2D<S>, channel: usize) -> GrayImage {
    let (h, w) = (w_bw.height(), w_bw.width());
    let mut img = GrayImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let v = w_bw.get(i, j, channel).as_f64().clamp(0.0, 1.0);
            img.put_pixel(j as u32, i as u32, Luma([(v * 255.0).round() as u8]));
        }
    }
    img
}

/// Channel-mean occlusion map of a weight set (identical to the single
/// channel for scalar-weight variants).
pub fn mean_occlusion_map_image<S: Scalar>(weights: &FusionWeights<S>) -> GrayImage {
    let (h, w, c) = weights.w_bw.shape();
    let mut img = GrayImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let mean: f64 = weights.w_bw.pixel(i, j).iter().map(|v| v.as_f64()).sum::<f64>()
                / c as f64;
            img.put_pixel(
                j as u32,
                i as u32,
                Luma([(mean.clamp(0.0, 1.0) * 255.0).round() as u8]),
            );
        }
    }
    img
}
