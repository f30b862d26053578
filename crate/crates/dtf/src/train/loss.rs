//! Training losses: the robust per-pixel loss and plain MSE.

use crate::error::{Error, Result};
use crate::flow::{SceneFlowField, FLOW_CHANNELS};
use crate::grid::Grid2D;
use crate::mask::PixelMask;
use crate::scalar::Scalar;

/// Parameters of the robust loss `(1/N) sum ((|s - s_hat|_1 + eps)^q)`.
///
/// The sub-unit exponent keeps strong outliers from dominating the
/// gradient signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustLossConfig {
    pub epsilon: f64,
    pub q: f64,
}

impl Default for RobustLossConfig {
    fn default() -> Self {
        RobustLossConfig {
            epsilon: 0.01,
            q: 0.4,
        }
    }
}

impl RobustLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "robust loss epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(Error::Config(format!(
                "robust loss exponent must lie in (0, 1], got {}",
                self.q
            )));
        }
        Ok(())
    }
}

fn check_loss_shapes<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    context: &'static str,
) -> Result<usize> {
    if !est.same_shape(gt) || valid.height() != gt.height() || valid.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            context,
            expected: gt.grid().shape(),
            got: est.grid().shape(),
        });
    }
    let n = valid.count_true();
    if n == 0 {
        return Err(Error::NoValidPixels { context });
    }
    Ok(n)
}

/// Mean over valid pixels of `(|est - gt|_1 + eps)^q`, L1 over the four
/// channels. Accumulated in f64 regardless of the field scalar.
pub fn robust_loss<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    cfg: &RobustLossConfig,
) -> Result<f64> {
    Ok(robust_loss_with_grad(est, gt, valid, cfg)?.0)
}

/// Robust loss plus its gradient with respect to the estimate.
///
/// Per channel the gradient is `q (l1 + eps)^(q-1) sign(e_c) / N`; the
/// subgradient at an exactly-zero channel error is 0. Invalid pixels get
/// zero gradient.
pub fn robust_loss_with_grad<S: Scalar>(
    est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    cfg: &RobustLossConfig,
) -> Result<(f64, Grid2D<S>)> {
    cfg.validate()?;
    let n = check_loss_shapes(est, gt, valid, "robust_loss")? as f64;
    let (h, w) = (gt.height(), gt.width());
    let mut grad = Grid2D::new(h, w, FLOW_CHANNELS);
    let mut loss = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            if !valid.get(i, j) {
                continue;
            }
            let e = est.pixel(i, j);
            let g = gt.pixel(i, j);
            let mut l1 = 0.0f64;
            for c in 0..FLOW_CHANNELS {
                l1 += (e[c].as_f64() - g[c].as_f64()).abs();
            }
            let powed = (l1 + cfg.epsilon).powf(cfg.q);
            loss += powed;
            let scale = cfg.q * (l1 + cfg.epsilon).powf(cfg.q - 1.0) / n;
            let gpx = grad.pixel_mut(i, j);
            for c in 0..FLOW_CHANNELS {
                let diff = e[c].as_f64() - g[c].as_f64();
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                gpx[c] = S::from_f64(scale * sign);
            }
        }
    }
    Ok((loss / n, grad))
}

/// The three-term loss applied to the forward estimate, the inverted
/// backward estimate, and the fused result, all against the same forward
/// ground truth. Keeping per-branch terms stops the fusion from starving
/// one side of updates once the weights saturate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub fw: f64,
    pub inv: f64,
    pub fused: f64,
}

impl TotalLoss {
    pub fn total(&self) -> f64 {
        self.fw + self.inv + self.fused
    }
}

pub fn total_loss<S: Scalar>(
    fw: &SceneFlowField<S>,
    inv: &SceneFlowField<S>,
    fused: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    cfg: &RobustLossConfig,
) -> Result<TotalLoss> {
    Ok(TotalLoss {
        fw: robust_loss(fw, gt, valid, cfg)?,
        inv: robust_loss(inv, gt, valid, cfg)?,
        fused: robust_loss(fused, gt, valid, cfg)?,
    })
}

/// Mean squared error over valid pixels and channels, with gradient.
pub fn mse_loss_with_grad<S: Scalar>(
    est: &Grid2D<S>,
    gt: &Grid2D<S>,
    valid: &PixelMask,
) -> Result<(f64, Grid2D<S>)> {
    if est.shape() != gt.shape() || valid.height() != gt.height() || valid.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            context: "mse_loss",
            expected: gt.shape(),
            got: est.shape(),
        });
    }
    let n_px = valid.count_true();
    if n_px == 0 {
        return Err(Error::NoValidPixels { context: "mse_loss" });
    }
    let denom = (n_px * gt.channels()) as f64;
    let (h, w, c) = gt.shape();
    let mut grad = Grid2D::new(h, w, c);
    let mut loss = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            if !valid.get(i, j) {
                continue;
            }
            let e = est.pixel(i, j);
            let g = gt.pixel(i, j);
            let gpx = grad.pixel_mut(i, j);
            for ch in 0..c {
                let diff = e[ch].as_f64() - g[ch].as_f64();
                loss += diff * diff;
                gpx[ch] = S::from_f64(2.0 * diff / denom);
            }
        }
    }
    Ok((loss / denom, grad))
}
