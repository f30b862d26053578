//! Supervised inverter pretraining.
//!
//! Inputs are backward ground-truth fields (plus coordinates), targets are
//! the forward ground-truth fields, the loss is plain MSE over pixels the
//! forward ground truth covers.

use std::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::grid::{normalized_coordinate_grid, Grid2D};
use crate::invert::{InverterNetwork, INVERTER_TAG};
use crate::net::NetworkParams;
use crate::sample::FrameTripletSample;
use crate::scalar::Scalar;
use crate::train::adam::{adam_step, AdamState};
use crate::train::state::{NetState, TrainState};
use crate::train::{
    ensure_finite, epoch_rng, loss::mse_loss_with_grad, BestTracker, EpochHook, EpochSnapshot,
    TrainLog, TrainSchedule,
};

/// One pretraining epoch in the log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverterEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

impl fmt::Display for InverterEpoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} lr {:.3e} train_mse {:.6e}",
            self.epoch, self.lr, self.train_mse
        )?;
        if let Some(v) = self.val_mse {
            write!(f, " val_mse {v:.6e}")?;
        }
        Ok(())
    }
}

pub struct TrainedInverter<S> {
    pub final_net: InverterNetwork<S>,
    /// Checkpoint of the best validation epoch (the final one when no
    /// validation split is given).
    pub best_net: InverterNetwork<S>,
    pub log: TrainLog<InverterEpoch>,
}

fn inverter_io<S: Scalar>(
    sample: &FrameTripletSample<S>,
    coords: &Grid2D<S>,
) -> Result<(Grid2D<S>, Grid2D<S>)> {
    let bw = sample
        .backward
        .as_ref()
        .ok_or_else(|| Error::MissingFile {
            what: "backward ground truth (required for pretraining)".into(),
            sample: sample.id.clone(),
            path: Default::default(),
        })?;
    let input = Grid2D::concat_channels(&[bw.field.grid(), coords])?;
    Ok((input, sample.forward.field.grid().clone()))
}

fn mean_val_mse<S: Scalar>(
    net: &InverterNetwork<S>,
    val: &[FrameTripletSample<S>],
) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for sample in val {
        let coords = normalized_coordinate_grid(sample.height(), sample.width());
        let (input, target) = inverter_io(sample, &coords)?;
        let out = net.net().forward(&input)?;
        let (mse, _) = mse_loss_with_grad(&out, &target, &sample.forward.valid)?;
        total += mse;
    }
    Ok(Some(total / val.len() as f64))
}

/// Pretrains an inverter; deterministic given (schedule, sample order).
///
/// `resume` continues from a previous epoch snapshot on the bitwise-same
/// trajectory. The per-epoch hook receives a resumable state and best-epoch
/// flag; returning an error aborts training.
pub fn train_inverter<S: Scalar>(
    train: &[FrameTripletSample<S>],
    val: &[FrameTripletSample<S>],
    schedule: &TrainSchedule,
    resume: Option<TrainState<S>>,
    on_epoch: EpochHook<'_, S>,
) -> Result<TrainedInverter<S>> {
    schedule.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }

    let (mut net, mut adam, start_epoch) = match resume {
        Some(state) => {
            let mut nets = state.nets;
            if nets.len() != 1 || nets[0].tag != INVERTER_TAG {
                return Err(Error::Config(
                    "resume state does not hold an inverter".into(),
                ));
            }
            let entry = nets.remove(0);
            (
                InverterNetwork::from_net(entry.net)?,
                entry.adam,
                state.next_epoch,
            )
        }
        None => {
            let net = InverterNetwork::new(schedule.seed);
            let adam = AdamState::zeros_like(net.net().params());
            (net, adam, 0)
        }
    };

    let mut log = TrainLog::default();
    let mut tracker = BestTracker::new(net.clone());

    for epoch in start_epoch..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut epoch_rng(schedule.seed, epoch));

        let mut grad_accum = NetworkParams::zeros(net.net().specs());
        let mut in_batch = 0usize;
        let mut epoch_loss = 0.0f64;

        for &idx in &order {
            let sample = &train[idx];
            let coords = normalized_coordinate_grid(sample.height(), sample.width());
            let (input, target) = inverter_io(sample, &coords)?;
            let (out, trace) = net.net().forward_trace(&input)?;
            let (mse, grad_out) = mse_loss_with_grad(&out, &target, &sample.forward.valid)?;
            ensure_finite(mse, &format!("training loss on sample {}", sample.id))?;
            epoch_loss += mse;
            let (grads, _) = net.net().backward(&trace, &grad_out);
            grad_accum.add_assign(&grads);
            in_batch += 1;
            if in_batch == schedule.batch_size {
                grad_accum.scale(S::from_f64(1.0 / in_batch as f64));
                adam_step(net.net_mut().params_mut(), &grad_accum, &mut adam, &schedule.adam, lr)?;
                grad_accum = NetworkParams::zeros(net.net().specs());
                in_batch = 0;
            }
        }
        if in_batch > 0 {
            grad_accum.scale(S::from_f64(1.0 / in_batch as f64));
            adam_step(net.net_mut().params_mut(), &grad_accum, &mut adam, &schedule.adam, lr)?;
        }

        let train_mse = epoch_loss / train.len() as f64;
        let val_mse = mean_val_mse(&net, val)?;
        let entry = InverterEpoch {
            epoch,
            lr,
            train_mse,
            val_mse,
        };
        let is_best = tracker.update(val_mse.unwrap_or(train_mse), &net);
        let snapshot = EpochSnapshot {
            epoch,
            total_epochs: schedule.epochs,
            line: entry.to_string(),
            state: TrainState {
                next_epoch: epoch + 1,
                nets: vec![NetState {
                    tag: INVERTER_TAG.to_string(),
                    net: net.net().clone(),
                    adam: adam.clone(),
                }],
            },
            is_best,
        };
        on_epoch(&snapshot)?;
        log.entries.push(entry);
    }

    Ok(TrainedInverter {
        final_net: net,
        best_net: tracker.best,
        log,
    })
}
