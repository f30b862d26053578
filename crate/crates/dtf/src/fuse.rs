//! Forward/backward fusion: weight prediction networks, weighted averaging,
//! and the ground-truth oracle bound.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField, FLOW_CHANNELS};
use crate::grid::{normalized_coordinate_grid, Grid2D};
use crate::mask::{MaskKind, PixelMask};
use crate::metrics::{component_error, is_outlier, SfComponent};
use crate::net::{self, pairwise_softmax, Activation, ConvLayerSpec, ConvNet};
use crate::scalar::Scalar;

/// Tolerance for the per-pixel weight normalization `w_fw + w_bw = 1`.
pub const WEIGHT_NORMALIZATION_TOL: f64 = 1e-6;

/// The four fusion flavours.
///
/// `spatial` feeds normalized image coordinates alongside the two fields so
/// the network can model out-of-view motion explicitly; `4ch` predicts a
/// separate weight pair per scene flow channel instead of one shared pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionVariant {
    Basic,
    Spatial,
    FourChannel,
    SpatialFourChannel,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 4] = [
        FusionVariant::Basic,
        FusionVariant::Spatial,
        FusionVariant::FourChannel,
        FusionVariant::SpatialFourChannel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionVariant::Basic => "basic",
            FusionVariant::Spatial => "spatial",
            FusionVariant::FourChannel => "4ch",
            FusionVariant::SpatialFourChannel => "spatial-4ch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(FusionVariant::Basic),
            "spatial" => Ok(FusionVariant::Spatial),
            "4ch" => Ok(FusionVariant::FourChannel),
            "spatial-4ch" => Ok(FusionVariant::SpatialFourChannel),
            _ => Err(Error::Config(format!("unknown fusion variant {s:?}"))),
        }
    }

    pub fn spatial(self) -> bool {
        matches!(self, FusionVariant::Spatial | FusionVariant::SpatialFourChannel)
    }

    pub fn per_channel(self) -> bool {
        matches!(self, FusionVariant::FourChannel | FusionVariant::SpatialFourChannel)
    }

    /// 8 field channels, plus 2 coordinate channels for spatial variants.
    pub fn in_channels(self) -> usize {
        if self.spatial() {
            2 * FLOW_CHANNELS + 2
        } else {
            2 * FLOW_CHANNELS
        }
    }

    /// One (fw, bw) logit pair per weight channel.
    pub fn out_logits(self) -> usize {
        2 * self.weight_channels()
    }

    pub fn weight_channels(self) -> usize {
        if self.per_channel() {
            FLOW_CHANNELS
        } else {
            1
        }
    }

    pub fn checkpoint_tag(self) -> String {
        format!("dtf-fusion-{}-v1", self.name())
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-pixel convex weights over the forward and inverted-backward
/// candidates; 1 channel for scalar variants, 4 for per-channel variants.
///
/// `w_bw` doubles as a soft forward-occlusion map: preferring the backward
/// branch at a pixel signals that the forward view lost it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights<S> {
    pub w_fw: Grid2D<S>,
    pub w_bw: Grid2D<S>,
}

impl<S: Scalar> FusionWeights<S> {
    /// Uniform 0.5/0.5 weights.
    pub fn uniform(height: usize, width: usize, channels: usize) -> Self {
        let half = S::from_f64(0.5);
        FusionWeights {
            w_fw: Grid2D::filled(height, width, channels, half),
            w_bw: Grid2D::filled(height, width, channels, half),
        }
    }

    pub fn channels(&self) -> usize {
        self.w_fw.channels()
    }

    /// Largest deviation of `w_fw + w_bw` from 1 over all cells.
    pub fn max_normalization_deviation(&self) -> f64 {
        self.w_fw
            .values()
            .iter()
            .zip(self.w_bw.values())
            .map(|(&a, &b)| ((a + b).as_f64() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_fw.shape() != self.w_bw.shape() {
            return Err(Error::ShapeMismatch {
                context: "FusionWeights::validate",
                expected: self.w_fw.shape(),
                got: self.w_bw.shape(),
            });
        }
        let dev = self.max_normalization_deviation();
        if dev > WEIGHT_NORMALIZATION_TOL {
            return Err(Error::WeightsNotNormalized { max_deviation: dev });
        }
        Ok(())
    }
}

/// Fusion weight predictor: seven 3x3 layers with widths
/// 32, 64, 128, 128, 64, 32 and dilations 1, 2, 4, 8, 16, 1 before a linear
/// head that emits one logit pair per weight channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionNetwork<S> {
    variant: FusionVariant,
    net: ConvNet<S>,
}

impl<S: Scalar> FusionNetwork<S> {
    pub fn layer_specs(variant: FusionVariant) -> Vec<ConvLayerSpec> {
        let widths = [32, 64, 128, 128, 64, 32, variant.out_logits()];
        let dilations = [1, 2, 4, 8, 16, 1, 1];
        let mut specs = Vec::with_capacity(7);
        let mut cin = variant.in_channels();
        for (idx, (&cout, &dil)) in widths.iter().zip(&dilations).enumerate() {
            specs.push(ConvLayerSpec {
                in_channels: cin,
                out_channels: cout,
                kernel: 3,
                dilation: dil,
                activation: if idx == widths.len() - 1 {
                    Activation::Linear
                } else {
                    Activation::LeakyRelu01
                },
            });
            cin = cout;
        }
        specs
    }

    pub fn new(variant: FusionVariant, seed: u64) -> Self {
        let net =
            ConvNet::new(Self::layer_specs(variant), seed).expect("fixed architecture is valid");
        FusionNetwork { variant, net }
    }

    pub fn variant(&self) -> FusionVariant {
        self.variant
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

    /// Builds the network input: forward field, inverted-backward field,
    /// plus coordinates for spatial variants.
    pub fn assemble_input(
        &self,
        fw: &SceneFlowField<S>,
        inv: &SceneFlowField<S>,
    ) -> Result<Grid2D<S>> {
        for (field, name) in [(fw, "forward"), (inv, "inverted-backward")] {
            if field.direction() != FlowDirection::Forward {
                return Err(Error::DirectionMismatch {
                    context: if name == "forward" {
                        "predict_weights: forward input"
                    } else {
                        "predict_weights: inverted input"
                    },
                    expected: FlowDirection::Forward,
                    got: field.direction(),
                });
            }
        }
        if self.variant.spatial() {
            let coords = normalized_coordinate_grid(fw.height(), fw.width());
            Grid2D::concat_channels(&[fw.grid(), inv.grid(), &coords])
        } else {
            Grid2D::concat_channels(&[fw.grid(), inv.grid()])
        }
    }

    /// Splits head logits into the (forward, backward) halves.
    pub(crate) fn split_logits(&self, logits: &Grid2D<S>) -> (Grid2D<S>, Grid2D<S>) {
        let n = self.variant.weight_channels();
        (logits.slice_channels(0..n), logits.slice_channels(n..2 * n))
    }

    /// Predicts fusion weights for a forward/inverted-backward pair.
    pub fn predict_weights(
        &self,
        fw: &SceneFlowField<S>,
        inv: &SceneFlowField<S>,
    ) -> Result<FusionWeights<S>> {
        if !fw.same_shape(inv) {
            return Err(Error::ShapeMismatch {
                context: "predict_weights",
                expected: fw.grid().shape(),
                got: inv.grid().shape(),
            });
        }
        let input = self.assemble_input(fw, inv)?;
        let logits = self.net.forward(&input)?;
        let (logit_fw, logit_bw) = self.split_logits(&logits);
        let (w_fw, w_bw) = pairwise_softmax(&logit_fw, &logit_bw)?;
        Ok(FusionWeights { w_fw, w_bw })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        net::save_checkpoint(path, &self.variant.checkpoint_tag(), &self.net)
    }

    pub fn load(path: &Path, variant: FusionVariant) -> Result<Self> {
        let ckpt = net::load_checkpoint::<S>(path, Some(&variant.checkpoint_tag()))?;
        Self::from_net(variant, ckpt.net).map_err(|_| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("layer shapes do not match fusion variant {variant}"),
        })
    }

    pub fn from_net(variant: FusionVariant, net: ConvNet<S>) -> Result<Self> {
        if net.specs() != Self::layer_specs(variant).as_slice() {
            return Err(Error::Config(format!(
                "network does not match fusion variant {variant}"
            )));
        }
        Ok(FusionNetwork { variant, net })
    }
}

/// Convex per-pixel combination `w_fw * fw + w_bw * inv`.
///
/// Scalar weights broadcast over the four channels; 4-channel weights apply
/// channelwise. Weights must satisfy `w_fw + w_bw = 1` within 1e-6.
pub fn weighted_average<S: Scalar>(
    fw: &SceneFlowField<S>,
    inv: &SceneFlowField<S>,
    weights: &FusionWeights<S>,
) -> Result<SceneFlowField<S>> {
    if !fw.same_shape(inv)
        || weights.w_fw.height() != fw.height()
        || weights.w_fw.width() != fw.width()
    {
        return Err(Error::ShapeMismatch {
            context: "weighted_average",
            expected: fw.grid().shape(),
            got: inv.grid().shape(),
        });
    }
    let wc = weights.channels();
    if wc != 1 && wc != FLOW_CHANNELS {
        return Err(Error::ShapeMismatch {
            context: "weighted_average: weight channels",
            expected: (fw.height(), fw.width(), 1),
            got: weights.w_fw.shape(),
        });
    }
    weights.validate()?;

    let (h, w) = (fw.height(), fw.width());
    let mut out = Grid2D::new(h, w, FLOW_CHANNELS);
    for i in 0..h {
        for j in 0..w {
            let a = fw.pixel(i, j);
            let b = inv.pixel(i, j);
            let wf = weights.w_fw.pixel(i, j);
            let wb = weights.w_bw.pixel(i, j);
            let px = out.pixel_mut(i, j);
            for c in 0..FLOW_CHANNELS {
                let k = if wc == 1 { 0 } else { c };
                px[c] = wf[k] * a[c] + wb[k] * b[c];
            }
        }
    }
    SceneFlowField::new(out, FlowDirection::Forward)
}

/// Per-pixel selection mask produced by [`oracle_fuse`]: true where the
/// inverted-backward candidate was taken.
pub type OracleSelection = PixelMask;

/// Upper-bound fusion that consults the ground truth.
///
/// Per valid pixel the whole 4-vector is taken from one candidate. The
/// candidate with fewer outlier components (KITTI thresholds, applied
/// pointwise) wins; ties fall back to the smaller L1 error over the four
/// channels, remaining ties keep the forward candidate. Invalid pixels copy
/// the forward candidate.
pub fn oracle_fuse<S: Scalar>(
    fw: &SceneFlowField<S>,
    inv: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
) -> Result<(SceneFlowField<S>, OracleSelection)> {
    if !fw.same_shape(inv) || !fw.same_shape(gt) {
        return Err(Error::ShapeMismatch {
            context: "oracle_fuse",
            expected: gt.grid().shape(),
            got: fw.grid().shape(),
        });
    }
    if valid.height() != gt.height() || valid.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            context: "oracle_fuse: valid mask",
            expected: (gt.height(), gt.width(), 1),
            got: (valid.height(), valid.width(), 1),
        });
    }
    let (h, w) = (gt.height(), gt.width());
    let mut out = fw.grid().clone();
    let mut selection = PixelMask::filled(h, w, MaskKind::Valid, false);

    let outlier_count = |est: &[S], gt_px: &[S]| -> u32 {
        SfComponent::PRIMITIVE
            .iter()
            .filter(|&&c| {
                let (err, mag) = component_error(est, gt_px, c);
                is_outlier(err, mag)
            })
            .count() as u32
    };
    let l1 = |est: &[S], gt_px: &[S]| -> f64 {
        est.iter()
            .zip(gt_px)
            .map(|(&e, &g)| (e.as_f64() - g.as_f64()).abs())
            .sum()
    };

    for i in 0..h {
        for j in 0..w {
            if !valid.get(i, j) {
                continue;
            }
            let gt_px = gt.pixel(i, j);
            let fw_px = fw.pixel(i, j);
            let inv_px = inv.pixel(i, j);
            let (cf, ci) = (outlier_count(fw_px, gt_px), outlier_count(inv_px, gt_px));
            let take_inv = match cf.cmp(&ci) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => l1(inv_px, gt_px) < l1(fw_px, gt_px),
            };
            if take_inv {
                let src = inv_px.to_vec();
                out.pixel_mut(i, j).copy_from_slice(&src);
                selection.set(i, j, true);
            }
        }
    }
    Ok((
        SceneFlowField::new(out, FlowDirection::Forward)?,
        selection,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate, Region};

    fn forward_field(h: usize, w: usize, px: [f64; 4]) -> SceneFlowField<f64> {
        let mut grid = Grid2D::new(h, w, 4);
        for p in grid.values_mut().chunks_exact_mut(4) {
            p.copy_from_slice(&px);
        }
        SceneFlowField::new(grid, FlowDirection::Forward).unwrap()
    }

    #[test]
    fn basic_parameter_count() {
        let net = FusionNetwork::<f64>::new(FusionVariant::Basic, 0);
        assert_eq!(net.param_count(), 335_106);
    }

    #[test]
    fn variant_shapes() {
        assert_eq!(FusionVariant::Basic.in_channels(), 8);
        assert_eq!(FusionVariant::Spatial.in_channels(), 10);
        assert_eq!(FusionVariant::FourChannel.in_channels(), 8);
        assert_eq!(FusionVariant::SpatialFourChannel.in_channels(), 10);
        assert_eq!(FusionVariant::Basic.out_logits(), 2);
        assert_eq!(FusionVariant::FourChannel.out_logits(), 8);
        let spatial = FusionNetwork::<f64>::new(FusionVariant::Spatial, 1);
        assert_eq!(spatial.net().specs()[0].in_channels, 10);
        let four = FusionNetwork::<f64>::new(FusionVariant::FourChannel, 1);
        assert_eq!(four.net().specs().last().unwrap().out_channels, 8);
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in FusionVariant::ALL {
            assert_eq!(FusionVariant::parse(v.name()).unwrap(), v);
        }
        assert!(FusionVariant::parse("other").is_err());
    }

    #[test]
    fn zeroed_head_predicts_half_weights() {
        for variant in FusionVariant::ALL {
            let mut net = FusionNetwork::<f64>::new(variant, 3);
            let last = net.net_mut().params_mut().layers.last_mut().unwrap();
            last.weights.fill(0.0);
            last.bias.fill(0.0);
            let fw = forward_field(4, 5, [1.0, 2.0, 3.0, 4.0]);
            let inv = forward_field(4, 5, [0.5, 1.5, 2.5, 3.5]);
            let weights = net.predict_weights(&fw, &inv).unwrap();
            assert_eq!(weights.channels(), variant.weight_channels());
            for &v in weights.w_fw.values() {
                assert_eq!(v, 0.5);
            }
        }
    }

    #[test]
    fn predicted_weights_are_normalized_for_random_nets() {
        for variant in FusionVariant::ALL {
            let net = FusionNetwork::<f64>::new(variant, 17);
            let mut fw = forward_field(6, 6, [0.0; 4]);
            let mut inv = forward_field(6, 6, [0.0; 4]);
            for (k, v) in fw.grid_mut().values_mut().iter_mut().enumerate() {
                *v = ((k * 13) as f64 * 0.13).sin() * 10.0;
            }
            for (k, v) in inv.grid_mut().values_mut().iter_mut().enumerate() {
                *v = ((k * 7) as f64 * 0.29).cos() * 10.0;
            }
            let weights = net.predict_weights(&fw, &inv).unwrap();
            assert!(weights.max_normalization_deviation() < 1e-9);
            assert!(weights
                .w_fw
                .values()
                .iter()
                .all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn weighted_average_endpoints_and_convexity() {
        let fw = forward_field(2, 2, [10.0, 10.0, 10.0, 10.0]);
        let inv = forward_field(2, 2, [20.0, 20.0, 20.0, 20.0]);

        let all_fw = FusionWeights {
            w_fw: Grid2D::filled(2, 2, 1, 1.0),
            w_bw: Grid2D::filled(2, 2, 1, 0.0),
        };
        assert_eq!(weighted_average(&fw, &inv, &all_fw).unwrap(), fw);

        let quarter = FusionWeights {
            w_fw: Grid2D::filled(2, 2, 1, 0.25),
            w_bw: Grid2D::filled(2, 2, 1, 0.75),
        };
        let fused = weighted_average(&fw, &inv, &quarter).unwrap();
        assert_eq!(fused.pixel(0, 0), &[17.5, 17.5, 17.5, 17.5]);

        // equal inputs are a fixed point for any valid weights
        let same = weighted_average(&fw, &fw, &quarter).unwrap();
        assert_eq!(same, fw);
    }

    #[test]
    fn four_channel_weights_equal_scalar_weights() {
        let fw = forward_field(3, 3, [1.0, -2.0, 5.0, 6.0]);
        let inv = forward_field(3, 3, [-1.0, 4.0, 6.0, 3.0]);
        let scalar = FusionWeights {
            w_fw: Grid2D::filled(3, 3, 1, 0.3),
            w_bw: Grid2D::filled(3, 3, 1, 0.7),
        };
        let four = FusionWeights {
            w_fw: Grid2D::filled(3, 3, 4, 0.3),
            w_bw: Grid2D::filled(3, 3, 4, 0.7),
        };
        assert_eq!(
            weighted_average(&fw, &inv, &scalar).unwrap(),
            weighted_average(&fw, &inv, &four).unwrap()
        );
    }

    #[test]
    fn unnormalized_weights_are_rejected() {
        let fw = forward_field(1, 1, [0.0; 4]);
        let weights = FusionWeights {
            w_fw: Grid2D::filled(1, 1, 1, 0.6),
            w_bw: Grid2D::filled(1, 1, 1, 0.6),
        };
        assert!(matches!(
            weighted_average(&fw, &fw, &weights),
            Err(Error::WeightsNotNormalized { .. })
        ));
    }

    #[test]
    fn oracle_picks_exact_candidate() {
        let gt = forward_field(1, 1, [5.0, 0.0, 10.0, 10.0]);
        let inv = forward_field(1, 1, [9.0, 3.0, 14.0, 10.0]);
        let valid = PixelMask::filled(1, 1, MaskKind::Valid, true);
        let (fused, sel) = oracle_fuse(&gt, &inv, &gt, &valid).unwrap();
        assert_eq!(fused, gt);
        assert!(!sel.get(0, 0));
    }

    #[test]
    fn oracle_prefers_fewer_outlier_components() {
        let gt = forward_field(1, 1, [0.0, 0.0, 10.0, 10.0]);
        // fw: two outlier components (D1, D2); inv: one (OF)
        let fw = forward_field(1, 1, [0.0, 0.0, 20.0, 20.0]);
        let inv = forward_field(1, 1, [8.0, 0.0, 10.0, 10.0]);
        let valid = PixelMask::filled(1, 1, MaskKind::Valid, true);
        let (fused, sel) = oracle_fuse(&fw, &inv, &gt, &valid).unwrap();
        assert!(sel.get(0, 0));
        assert_eq!(fused, inv);
    }

    #[test]
    fn oracle_tie_breaks_on_l1_then_forward() {
        let gt = forward_field(1, 1, [0.0, 0.0, 10.0, 10.0]);
        // both inliers; inv has the smaller L1
        let fw = forward_field(1, 1, [1.0, 1.0, 10.0, 10.0]);
        let inv = forward_field(1, 1, [0.5, 0.0, 10.0, 10.0]);
        let valid = PixelMask::filled(1, 1, MaskKind::Valid, true);
        let (_, sel) = oracle_fuse(&fw, &inv, &gt, &valid).unwrap();
        assert!(sel.get(0, 0));

        // exact L1 tie keeps the forward candidate
        let inv_tie = forward_field(1, 1, [0.0, 2.0, 10.0, 10.0]);
        let fw_tie = forward_field(1, 1, [2.0, 0.0, 10.0, 10.0]);
        let (fused, sel) = oracle_fuse(&fw_tie, &inv_tie, &gt, &valid).unwrap();
        assert!(!sel.get(0, 0));
        assert_eq!(fused, fw_tie);
    }

    #[test]
    fn oracle_sf_rate_dominates_both_inputs() {
        // randomized pixels: oracle SF outliers == fw_SF AND inv_SF pointwise
        let (h, w) = (8, 8);
        let mut gt = SceneFlowField::<f64>::zeros(h, w, FlowDirection::Forward);
        let mut fw = SceneFlowField::<f64>::zeros(h, w, FlowDirection::Forward);
        let mut inv = SceneFlowField::<f64>::zeros(h, w, FlowDirection::Forward);
        let mut state = 0x12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 1.0
        };
        for grid in [gt.grid_mut(), fw.grid_mut(), inv.grid_mut()] {
            for px in grid.values_mut().chunks_exact_mut(4) {
                px[0] = next() * 12.0;
                px[1] = next() * 12.0;
                px[2] = 10.0 + next() * 8.0;
                px[3] = 10.0 + next() * 8.0;
            }
        }
        let valid = PixelMask::filled(h, w, MaskKind::Valid, true);
        let noc = PixelMask::filled(h, w, MaskKind::Noc, true);
        let (fused, _) = oracle_fuse(&fw, &inv, &gt, &valid).unwrap();
        let r_fused = evaluate(&fused, &gt, &valid, &noc).unwrap();
        let r_fw = evaluate(&fw, &gt, &valid, &noc).unwrap();
        let r_inv = evaluate(&inv, &gt, &valid, &noc).unwrap();
        let sf = |r: &crate::metrics::EvalReport| r.rate(SfComponent::Sf, Region::All).unwrap();
        assert!(sf(&r_fused) <= sf(&r_fw).min(sf(&r_inv)));
    }

    #[test]
    fn fusion_checkpoint_roundtrip_and_variant_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fusion.ckpt");
        let net = FusionNetwork::<f64>::new(FusionVariant::FourChannel, 8);
        net.save(&path).unwrap();
        let loaded = FusionNetwork::<f64>::load(&path, FusionVariant::FourChannel).unwrap();
        assert_eq!(loaded, net);
        assert!(matches!(
            FusionNetwork::<f64>::load(&path, FusionVariant::Basic),
            Err(Error::ArchitectureTag { .. })
        ));
    }
}
