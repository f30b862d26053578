//! End-to-end fine-tuning of inverter and fusion on estimator outputs.
//!
//! Per sample: estimate forward and backward fields, invert the backward
//! one, predict fusion weights, average. The three-term loss is
//! backpropagated by hand through the weighted average, the pairwise
//! softmax, and both networks; the auxiliary estimator itself is a fixed
//! black box and receives no updates.

use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::estimate::{estimate, EstimatorConfig};
use crate::flow::{FlowDirection, SceneFlowField, FLOW_CHANNELS};
use crate::fuse::{weighted_average, FusionNetwork, FusionVariant, FusionWeights};
use crate::grid::{normalized_coordinate_grid, Grid2D};
use crate::invert::{InverterNetwork, INVERTER_TAG};
use crate::mask::PixelMask;
use crate::metrics::{aggregate, evaluate, EvalReport, Region, SfComponent};
use crate::net::{pairwise_softmax, NetworkParams};
use crate::sample::FrameTripletSample;
use crate::scalar::Scalar;
use crate::train::adam::{adam_step, AdamState};
use crate::train::loss::{robust_loss, robust_loss_with_grad, RobustLossConfig, TotalLoss};
use crate::train::state::{NetState, TrainState};
use crate::train::{
    ensure_finite, epoch_rng, BestTracker, EpochHook, EpochSnapshot, TrainLog, TrainSchedule,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub variant: FusionVariant,
    pub estimator: EstimatorConfig,
    pub loss: RobustLossConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variant: FusionVariant::Basic,
            estimator: EstimatorConfig::default(),
            loss: RobustLossConfig::default(),
        }
    }
}

/// One fine-tuning epoch in the log. Losses are per-sample means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub loss_fw: f64,
    pub loss_inv: f64,
    pub loss_fused: f64,
    pub val_sf_all: Option<f64>,
    pub val_sf_occ: Option<f64>,
}

impl fmt::Display for PipelineEpoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} lr {:.3e} loss_fw {:.6} loss_inv {:.6} loss_fused {:.6}",
            self.epoch, self.lr, self.loss_fw, self.loss_inv, self.loss_fused
        )?;
        if let Some(v) = self.val_sf_all {
            write!(f, " val_sf_all {v:.4}")?;
        }
        if let Some(v) = self.val_sf_occ {
            write!(f, " val_sf_occ {v:.4}")?;
        }
        Ok(())
    }
}

pub struct TrainedPipeline<S> {
    pub inverter: InverterNetwork<S>,
    pub fusion: FusionNetwork<S>,
    pub best_inverter: InverterNetwork<S>,
    pub best_fusion: FusionNetwork<S>,
    pub log: TrainLog<PipelineEpoch>,
}

/// Result of one forward/backward pass through the full pipeline.
pub struct PipelineStepOutput<S> {
    pub losses: TotalLoss,
    pub inverter_grads: NetworkParams<S>,
    pub fusion_grads: NetworkParams<S>,
    pub inverted: SceneFlowField<S>,
    pub weights: FusionWeights<S>,
    pub fused: SceneFlowField<S>,
}

/// Forward pass plus hand-written reverse pass for one sample.
///
/// The inverted field receives three gradient paths: its own loss term,
/// the weighted average (scaled by `w_bw`), and the fusion network input.
pub fn pipeline_step<S: Scalar>(
    inverter: &InverterNetwork<S>,
    fusion: &FusionNetwork<S>,
    fw_est: &SceneFlowField<S>,
    bw_est: &SceneFlowField<S>,
    gt: &SceneFlowField<S>,
    valid: &PixelMask,
    loss_cfg: &RobustLossConfig,
) -> Result<PipelineStepOutput<S>> {
    let (h, w) = (gt.height(), gt.width());
    let coords = normalized_coordinate_grid::<S>(h, w);

    // forward
    let inv_input = Grid2D::concat_channels(&[bw_est.grid(), &coords])?;
    let (inv_out, inv_trace) = inverter.net().forward_trace(&inv_input)?;
    let inverted = SceneFlowField::new(inv_out, FlowDirection::Forward)?;

    let fus_input = fusion.assemble_input(fw_est, &inverted)?;
    let (logits, fus_trace) = fusion.net().forward_trace(&fus_input)?;
    let (logit_fw, logit_bw) = fusion.split_logits(&logits);
    let (w_fw, w_bw) = pairwise_softmax(&logit_fw, &logit_bw)?;
    let weights = FusionWeights { w_fw, w_bw };
    let fused = weighted_average(fw_est, &inverted, &weights)?;

    // losses
    let loss_fw = robust_loss(fw_est, gt, valid, loss_cfg)?;
    let (loss_inv, g_inv_loss) = robust_loss_with_grad(&inverted, gt, valid, loss_cfg)?;
    let (loss_fused, g_fused) = robust_loss_with_grad(&fused, gt, valid, loss_cfg)?;

    // d loss_fused / d logits, through the weighted average and softmax
    let wc = fusion.variant().weight_channels();
    let mut g_logits = Grid2D::<S>::new(h, w, 2 * wc);
    for i in 0..h {
        for j in 0..w {
            let gf = g_fused.pixel(i, j);
            let a = fw_est.pixel(i, j);
            let b = inverted.pixel(i, j);
            let wf = weights.w_fw.pixel(i, j);
            let wb = weights.w_bw.pixel(i, j);
            let out = g_logits.pixel_mut(i, j);
            for k in 0..wc {
                let mut gwf = S::zero();
                let mut gwb = S::zero();
                if wc == 1 {
                    for c in 0..FLOW_CHANNELS {
                        gwf += gf[c] * a[c];
                        gwb += gf[c] * b[c];
                    }
                } else {
                    gwf = gf[k] * a[k];
                    gwb = gf[k] * b[k];
                }
                let d = (gwf - gwb) * wf[k] * wb[k];
                out[k] = d;
                out[wc + k] = -d;
            }
        }
    }

    let (fusion_grads, g_fus_input) = fusion.net().backward(&fus_trace, &g_logits);

    // total gradient reaching the inverted field
    let mut g_inv_total = g_inv_loss;
    for i in 0..h {
        for j in 0..w {
            let gf = g_fused.pixel(i, j);
            let wb = weights.w_bw.pixel(i, j);
            let from_input = g_fus_input.pixel(i, j);
            let out = g_inv_total.pixel_mut(i, j);
            for c in 0..FLOW_CHANNELS {
                let k = if wc == 1 { 0 } else { c };
                out[c] += from_input[FLOW_CHANNELS + c] + gf[c] * wb[k];
            }
        }
    }

    let (inverter_grads, _) = inverter.net().backward(&inv_trace, &g_inv_total);

    Ok(PipelineStepOutput {
        losses: TotalLoss {
            fw: loss_fw,
            inv: loss_inv,
            fused: loss_fused,
        },
        inverter_grads,
        fusion_grads,
        inverted,
        weights,
        fused,
    })
}

/// Forward-only fused prediction for one sample pair.
pub fn fuse_sample<S: Scalar>(
    inverter: &InverterNetwork<S>,
    fusion: &FusionNetwork<S>,
    fw_est: &SceneFlowField<S>,
    bw_est: &SceneFlowField<S>,
) -> Result<(SceneFlowField<S>, FusionWeights<S>, SceneFlowField<S>)> {
    let inverted = inverter.invert(bw_est)?;
    let weights = fusion.predict_weights(fw_est, &inverted)?;
    let fused = weighted_average(fw_est, &inverted, &weights)?;
    Ok((inverted, weights, fused))
}

/// Aggregated evaluation of the fused output over a sample set.
pub fn evaluate_pipeline<S: Scalar>(
    inverter: &InverterNetwork<S>,
    fusion: &FusionNetwork<S>,
    samples: &[FrameTripletSample<S>],
    estimator: &EstimatorConfig,
) -> Result<EvalReport> {
    let mut reports = Vec::with_capacity(samples.len());
    for sample in samples {
        let fw_est = estimate(sample, FlowDirection::Forward, estimator)?;
        let bw_est = estimate(sample, FlowDirection::Backward, estimator)?;
        let (_, _, fused) = fuse_sample(inverter, fusion, &fw_est, &bw_est)?;
        reports.push(evaluate(
            &fused,
            &sample.forward.field,
            &sample.forward.valid,
            &sample.forward.noc,
        )?);
    }
    aggregate(&reports)
}

/// Fine-tunes inverter and fusion jointly.
///
/// The estimator is deterministic per (sample, direction), so estimates are
/// computed once up front. Training is bit-reproducible given (seed,
/// dataset order, schedule), and `resume` continues an interrupted run on
/// the identical trajectory.
pub fn train_pipeline<S: Scalar>(
    train: &[FrameTripletSample<S>],
    val: &[FrameTripletSample<S>],
    config: &PipelineConfig,
    schedule: &TrainSchedule,
    inverter_init: Option<InverterNetwork<S>>,
    resume: Option<TrainState<S>>,
    on_epoch: EpochHook<'_, S>,
) -> Result<TrainedPipeline<S>> {
    schedule.validate()?;
    config.estimator.validate()?;
    config.loss.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }

    let fusion_tag = config.variant.checkpoint_tag();
    let (mut inverter, mut fusion, mut adam_inv, mut adam_fus, start_epoch) = match resume {
        Some(state) => {
            if state.nets.len() != 2
                || state.nets[0].tag != INVERTER_TAG
                || state.nets[1].tag != fusion_tag
            {
                return Err(Error::Config(
                    "resume state does not hold this pipeline's networks".into(),
                ));
            }
            let mut nets = state.nets;
            let fus = nets.remove(1);
            let inv = nets.remove(0);
            (
                InverterNetwork::from_net(inv.net)?,
                FusionNetwork::from_net(config.variant, fus.net)?,
                inv.adam,
                fus.adam,
                state.next_epoch,
            )
        }
        None => {
            let inverter =
                inverter_init.unwrap_or_else(|| InverterNetwork::new(schedule.seed));
            let fusion = FusionNetwork::new(config.variant, schedule.seed ^ 0xF05E);
            let adam_inv = AdamState::zeros_like(inverter.net().params());
            let adam_fus = AdamState::zeros_like(fusion.net().params());
            (inverter, fusion, adam_inv, adam_fus, 0)
        }
    };

    // the estimator is a pure function of (sample, config); cache its output
    let prep = |samples: &[FrameTripletSample<S>]| -> Result<Vec<(SceneFlowField<S>, SceneFlowField<S>)>> {
        samples
            .iter()
            .map(|s| {
                Ok((
                    estimate(s, FlowDirection::Forward, &config.estimator)?,
                    estimate(s, FlowDirection::Backward, &config.estimator)?,
                ))
            })
            .collect()
    };
    let train_est = prep(train)?;
    let val_est = prep(val)?;

    let mut log = TrainLog::default();
    let mut tracker = BestTracker::new((inverter.clone(), fusion.clone()));

    for epoch in start_epoch..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(schedule.seed, epoch));

        let mut grad_inv = NetworkParams::zeros(inverter.net().specs());
        let mut grad_fus = NetworkParams::zeros(fusion.net().specs());
        let mut in_batch = 0usize;
        let mut sums = TotalLoss {
            fw: 0.0,
            inv: 0.0,
            fused: 0.0,
        };

        for &idx in &order {
            let sample = &train[idx];
            let (fw_est, bw_est) = &train_est[idx];
            let step = pipeline_step(
                &inverter,
                &fusion,
                fw_est,
                bw_est,
                &sample.forward.field,
                &sample.forward.valid,
                &config.loss,
            )?;
            ensure_finite(
                step.losses.total(),
                &format!("training loss on sample {}", sample.id),
            )?;
            sums.fw += step.losses.fw;
            sums.inv += step.losses.inv;
            sums.fused += step.losses.fused;
            grad_inv.add_assign(&step.inverter_grads);
            grad_fus.add_assign(&step.fusion_grads);
            in_batch += 1;
            if in_batch == schedule.batch_size {
                let scale = S::from_f64(1.0 / in_batch as f64);
                grad_inv.scale(scale);
                grad_fus.scale(scale);
                adam_step(inverter.net_mut().params_mut(), &grad_inv, &mut adam_inv, &schedule.adam, lr)?;
                adam_step(fusion.net_mut().params_mut(), &grad_fus, &mut adam_fus, &schedule.adam, lr)?;
                grad_inv = NetworkParams::zeros(inverter.net().specs());
                grad_fus = NetworkParams::zeros(fusion.net().specs());
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            let scale = S::from_f64(1.0 / in_batch as f64);
            grad_inv.scale(scale);
            grad_fus.scale(scale);
            adam_step(inverter.net_mut().params_mut(), &grad_inv, &mut adam_inv, &schedule.adam, lr)?;
            adam_step(fusion.net_mut().params_mut(), &grad_fus, &mut adam_fus, &schedule.adam, lr)?;
        }

        let n = train.len() as f64;
        let mut entry = PipelineEpoch {
            epoch,
            lr,
            loss_fw: sums.fw / n,
            loss_inv: sums.inv / n,
            loss_fused: sums.fused / n,
            val_sf_all: None,
            val_sf_occ: None,
        };

        let mut metric = entry.loss_fused + entry.loss_inv;
        if !val.is_empty() {
            let mut reports = Vec::with_capacity(val.len());
            for (sample, (fw_est, bw_est)) in val.iter().zip(&val_est) {
                let (_, _, fused) = fuse_sample(&inverter, &fusion, fw_est, bw_est)?;
                reports.push(evaluate(
                    &fused,
                    &sample.forward.field,
                    &sample.forward.valid,
                    &sample.forward.noc,
                )?);
            }
            let report = aggregate(&reports)?;
            entry.val_sf_all = report.rate(SfComponent::Sf, Region::All);
            entry.val_sf_occ = report.rate(SfComponent::Sf, Region::Occ);
            if let Some(rate) = entry.val_sf_all {
                metric = rate;
            }
        }

        let is_best = tracker.update(metric, &(inverter.clone(), fusion.clone()));
        let snapshot = EpochSnapshot {
            epoch,
            total_epochs: schedule.epochs,
            line: entry.to_string(),
            state: TrainState {
                next_epoch: epoch + 1,
                nets: vec![
                    NetState {
                        tag: INVERTER_TAG.to_string(),
                        net: inverter.net().clone(),
                        adam: adam_inv.clone(),
                    },
                    NetState {
                        tag: fusion_tag.clone(),
                        net: fusion.net().clone(),
                        adam: adam_fus.clone(),
                    },
                ],
            },
            is_best,
        };
        on_epoch(&snapshot)?;
        log.entries.push(entry);
    }

    let (best_inverter, best_fusion) = tracker.best;
    Ok(TrainedPipeline {
        inverter,
        fusion,
        best_inverter,
        best_fusion,
        log,
    })
}
