//! `dtf train`: end-to-end fine-tuning of inverter and fusion.

use std::path::Path;

use anyhow::{Context, Result};

use dtf::invert::InverterNetwork;
use dtf::train::{train_pipeline, PipelineConfig, TrainState};

use crate::commands::{ensure_dir, load_dataset, state_path, tail_split, write_text};
use crate::config::RunConfig;

pub fn run(config: &RunConfig, out_dir: &Path, resume: bool) -> Result<()> {
    let section = config
        .train
        .as_ref()
        .context("config needs a [train] section")?;
    let estimator = config
        .estimator
        .clone()
        .unwrap_or_default()
        .to_config(config.seed)?;
    let schedule = section.schedule(config.seed)?;
    let variant = section.variant()?;
    let pipeline_config = PipelineConfig {
        variant,
        estimator,
        loss: section.loss()?,
    };

    let samples = load_dataset(&section.dataset)?;
    let (train, val) = match &section.val_dataset {
        Some(path) => (samples, load_dataset(path)?),
        None => tail_split(samples, section.val_fraction),
    };

    ensure_dir(out_dir)?;
    config.write_resolved(out_dir)?;

    let inverter_init = section
        .inverter_init
        .as_ref()
        .map(|path| InverterNetwork::<f64>::load(path))
        .transpose()?;
    let resume_state = if resume {
        Some(TrainState::<f64>::load(&state_path(out_dir))?)
    } else {
        None
    };

    let out = train_pipeline(
        &train,
        &val,
        &pipeline_config,
        &schedule,
        inverter_init,
        resume_state,
        &mut |snap| {
            println!("[{}/{}] {}", snap.epoch + 1, snap.total_epochs, snap.line);
            snap.state.save(&state_path(out_dir))?;
            Ok(())
        },
    )?;

    out.inverter.save(&out_dir.join("inverter_final.ckpt"))?;
    out.fusion.save(&out_dir.join("fusion_final.ckpt"))?;
    out.best_inverter.save(&out_dir.join("inverter_best.ckpt"))?;
    out.best_fusion.save(&out_dir.join("fusion_best.ckpt"))?;
    write_text(&out_dir.join("train_log.txt"), &out.log.to_text())?;
    if let Some(last) = out.log.entries.last() {
        println!(
            "done: {} epochs, final losses fw {:.4} inv {:.4} fused {:.4}",
            out.log.entries.len(),
            last.loss_fw,
            last.loss_inv,
            last.loss_fused
        );
    }
    Ok(())
}
