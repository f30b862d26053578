//! `dtf generate`: synthesize a dataset and write it in the on-disk layout.

use std::path::Path;

use anyhow::{bail, Context, Result};

use dtf::io::{write_dataset, Split};

use crate::config::RunConfig;

pub fn run(config: &RunConfig, out_dir: &Path) -> Result<()> {
    let scene = config
        .scene
        .as_ref()
        .context("config needs a [scene] section")?;
    let dataset = config
        .dataset
        .as_ref()
        .context("config needs a [dataset] section")?;
    if dataset.count == 0 {
        bail!("dataset count must be at least 1");
    }
    let split = Split::parse(&dataset.split)?;

    let dist = scene.to_distribution();
    let samples = dist.generate(config.seed, dataset.count)?;
    let manifest = write_dataset(out_dir, split, &samples)?;
    config.write_resolved(out_dir)?;

    // occluded fraction per direction, averaged over samples
    let mut occ_fw = 0.0;
    let mut occ_bw = 0.0;
    for sample in &samples {
        let px = (sample.height() * sample.width()) as f64;
        occ_fw += sample.forward.occ()?.count_true() as f64 / px;
        if let Some(bw) = &sample.backward {
            occ_bw += bw.occ()?.count_true() as f64 / px;
        }
    }
    let n = samples.len() as f64;
    println!(
        "wrote {} samples ({}x{}, split {}) to {}",
        manifest.len(),
        samples[0].width(),
        samples[0].height(),
        split.name(),
        out_dir.display()
    );
    println!(
        "occluded fraction: forward {:.4}, backward {:.4}",
        occ_fw / n,
        occ_bw / n
    );
    Ok(())
}
