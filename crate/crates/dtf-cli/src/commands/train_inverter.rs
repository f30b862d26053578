//! `dtf train-inverter`: supervised pretraining on ground-truth pairs.

use std::path::Path;

use anyhow::{Context, Result};

use dtf::train::{train_inverter, TrainState};

use crate::commands::{ensure_dir, load_dataset, state_path, tail_split, write_text};
use crate::config::RunConfig;

pub fn run(config: &RunConfig, out_dir: &Path, resume: bool) -> Result<()> {
    let section = config
        .train
        .as_ref()
        .context("config needs a [train] section")?;
    let schedule = section.schedule(config.seed)?;

    let samples = load_dataset(&section.dataset)?;
    let (train, val) = match &section.val_dataset {
        Some(path) => (samples, load_dataset(path)?),
        None => tail_split(samples, section.val_fraction),
    };

    ensure_dir(out_dir)?;
    config.write_resolved(out_dir)?;

    let resume_state = if resume {
        Some(TrainState::<f64>::load(&state_path(out_dir))?)
    } else {
        None
    };

    let out = train_inverter(&train, &val, &schedule, resume_state, &mut |snap| {
        println!("[{}/{}] {}", snap.epoch + 1, snap.total_epochs, snap.line);
        snap.state.save(&state_path(out_dir))?;
        if snap.is_best {
            let net = dtf::invert::InverterNetwork::from_net(snap.state.nets[0].net.clone())?;
            net.save(&out_dir.join("inverter_best.ckpt"))?;
        }
        Ok(())
    })?;

    out.final_net.save(&out_dir.join("inverter_final.ckpt"))?;
    if !val.is_empty() {
        out.best_net.save(&out_dir.join("inverter_best.ckpt"))?;
    } else {
        out.final_net.save(&out_dir.join("inverter_best.ckpt"))?;
    }
    write_text(&out_dir.join("train_log.txt"), &out.log.to_text())?;
    println!(
        "done: {} epochs, final train mse {:.6e}",
        out.log.entries.len(),
        out.log.entries.last().map(|e| e.train_mse).unwrap_or(f64::NAN)
    );
    Ok(())
}
