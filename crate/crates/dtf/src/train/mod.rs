//! Training: schedules, optimizer, and the two procedures (inverter
//! pretraining, end-to-end pipeline fine-tuning).

mod adam;
mod inverter;
mod loss;
mod pipeline;
mod state;

pub use adam::{adam_step, AdamParams, AdamState};
pub use inverter::{train_inverter, InverterEpoch, TrainedInverter};
pub use loss::{
    mse_loss_with_grad, robust_loss, robust_loss_with_grad, total_loss, RobustLossConfig,
    TotalLoss,
};
pub use pipeline::{
    evaluate_pipeline, fuse_sample, pipeline_step, train_pipeline, PipelineConfig, PipelineEpoch,
    PipelineStepOutput, TrainedPipeline,
};
pub use state::{NetState, TrainState};

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Epoch count, batch size, and piecewise-constant learning rate stages.
///
/// `lr_stages` holds (start epoch, rate) pairs; epochs must be strictly
/// increasing and rates strictly decreasing, with the first stage at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_stages: Vec<(usize, f64)>,
    pub adam: AdamParams,
    pub seed: u64,
}

impl TrainSchedule {
    /// Inverter pretraining preset: 40 epochs, batch 4,
    /// 1e-4 dropping to 5e-5 at epoch 20 and 1e-5 at epoch 30.
    pub fn paper_inverter() -> Self {
        TrainSchedule {
            epochs: 40,
            batch_size: 4,
            lr_stages: vec![(0, 1e-4), (20, 5e-5), (30, 1e-5)],
            adam: AdamParams::default(),
            seed: 0,
        }
    }

    /// Pipeline fine-tuning preset: 100 epochs, batch 1,
    /// 5e-5 dropping to 1e-5 after epoch 75.
    pub fn paper_finetune() -> Self {
        TrainSchedule {
            epochs: 100,
            batch_size: 1,
            lr_stages: vec![(0, 5e-5), (75, 1e-5)],
            adam: AdamParams::default(),
            seed: 0,
        }
    }

    /// Small-scale default: 30 epochs, batch 1, 1e-4 dropping to 1e-5 at 20.
    pub fn desk_default() -> Self {
        TrainSchedule {
            epochs: 30,
            batch_size: 1,
            lr_stages: vec![(0, 1e-4), (20, 1e-5)],
            adam: AdamParams::default(),
            seed: 0,
        }
    }

    pub fn parse_preset(name: &str) -> Result<Self> {
        match name {
            "paper-inverter" => Ok(Self::paper_inverter()),
            "paper-finetune" => Ok(Self::paper_finetune()),
            "desk" => Ok(Self::desk_default()),
            _ => Err(Error::Config(format!("unknown schedule preset {name:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if self.lr_stages.is_empty() || self.lr_stages[0].0 != 0 {
            return Err(Error::Config("lr stages must start at epoch 0".into()));
        }
        for pair in self.lr_stages.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Config(
                    "lr stage epochs must strictly increase".into(),
                ));
            }
            if pair[1].1 >= pair[0].1 {
                return Err(Error::Config(
                    "lr stage rates must strictly decrease".into(),
                ));
            }
        }
        for &(_, rate) in &self.lr_stages {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate must be > 0, got {rate}"
                )));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let mut rate = self.lr_stages[0].1;
        for &(start, r) in &self.lr_stages {
            if epoch >= start {
                rate = r;
            }
        }
        rate
    }
}

/// Deterministic per-epoch RNG for batch shuffling. Keying by (seed, epoch)
/// keeps resumed runs on the exact trajectory of uninterrupted ones.
pub(crate) fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mix = (epoch as u64 + 1).wrapping_mul(0x9e3779b97f4a7c15);
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

/// Generic epoch-indexed log with a plain-text rendering.
#[derive(Debug, Clone)]
pub struct TrainLog<E> {
    pub entries: Vec<E>,
}

impl<E> Default for TrainLog<E> {
    fn default() -> Self {
        TrainLog {
            entries: Vec::new(),
        }
    }
}

impl<E: fmt::Display> TrainLog<E> {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# dtf training log v1\n");
        for e in &self.entries {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

/// Passed to the per-epoch hook after each completed epoch.
pub struct EpochSnapshot<S> {
    /// Completed epoch (0-based).
    pub epoch: usize,
    pub total_epochs: usize,
    /// The log line of this epoch.
    pub line: String,
    /// Resumable state as of the end of this epoch.
    pub state: TrainState<S>,
    /// Whether this epoch produced the best validation metric so far.
    pub is_best: bool,
}

/// Per-epoch callback; training aborts if it errors.
pub type EpochHook<'h, S> = &'h mut dyn FnMut(&EpochSnapshot<S>) -> Result<()>;

/// Tracks the lowest validation metric; ties keep the earlier epoch.
pub(crate) struct BestTracker<T> {
    best_metric: f64,
    pub best: T,
}

impl<T: Clone> BestTracker<T> {
    pub fn new(initial: T) -> Self {
        BestTracker {
            best_metric: f64::INFINITY,
            best: initial,
        }
    }

    pub fn update(&mut self, metric: f64, value: &T) -> bool {
        if metric < self.best_metric {
            self.best_metric = metric;
            self.best = value.clone();
            true
        } else {
            false
        }
    }
}

pub(crate) fn ensure_finite(value: f64, context: &str) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(value)
}
