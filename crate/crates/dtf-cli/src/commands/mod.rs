pub mod eval;
pub mod fuse;
pub mod generate;
pub mod train;
pub mod train_inverter;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use dtf::io::{load_manifest, load_samples};
use dtf::sample::FrameTripletSample;

/// Loads a dataset manifest and all its samples.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<FrameTripletSample<f64>>> {
    let manifest = load_manifest(manifest_path)
        .with_context(|| format!("loading manifest {}", manifest_path.display()))?;
    let samples = load_samples(&manifest)
        .with_context(|| format!("loading samples of {}", manifest_path.display()))?;
    Ok(samples)
}

/// Splits samples into (train, val) by taking the tail as validation.
pub fn tail_split(
    samples: Vec<FrameTripletSample<f64>>,
    val_fraction: f64,
) -> (Vec<FrameTripletSample<f64>>, Vec<FrameTripletSample<f64>>) {
    let n_val = ((samples.len() as f64) * val_fraction).round() as usize;
    let n_val = n_val.min(samples.len().saturating_sub(1));
    let split_at = samples.len() - n_val;
    let mut train = samples;
    let val = train.split_off(split_at);
    (train, val)
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn state_path(out_dir: &Path) -> PathBuf {
    out_dir.join("state_last.bin")
}
