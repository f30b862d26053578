//! `dtf fuse`: run the pipeline and write fused fields plus occlusion maps.

use std::path::Path;

use anyhow::{bail, Context, Result};

use dtf::estimate::estimate;
use dtf::flow::{FlowDirection, SceneFlowField, CH_D0, CH_D1, CH_U, CH_V};
use dtf::fuse::{oracle_fuse, weighted_average, FusionNetwork, FusionVariant};
use dtf::invert::{constant_linear_invert, InverterNetwork};
use dtf::io::png_codec::write_mask_png;
use dtf::io::write_field;
use dtf::mask::{MaskKind, PixelMask};
use dtf::viz::{mean_occlusion_map_image, occlusion_map_image};

use crate::commands::{ensure_dir, load_dataset};
use crate::config::RunConfig;

/// Pixels whose values fit the 16-bit field codecs.
fn encodable_mask(field: &SceneFlowField<f64>) -> PixelMask {
    let (h, w) = (field.height(), field.width());
    let mut mask = PixelMask::filled(h, w, MaskKind::Valid, true);
    for i in 0..h {
        for j in 0..w {
            let px = field.pixel(i, j);
            let ok = px.iter().all(|v| v.is_finite())
                && px[CH_U].abs() < 511.5
                && px[CH_V].abs() < 511.5
                && (px[CH_D0] * 256.0).round() >= 1.0
                && px[CH_D0] < 255.9
                && (px[CH_D1] * 256.0).round() >= 1.0
                && px[CH_D1] < 255.9;
            mask.set(i, j, ok);
        }
    }
    mask
}

enum Inversion {
    Learned(Box<InverterNetwork<f64>>),
    ConstantLinear,
}

pub fn run(config: &RunConfig, out_dir: &Path, inverter_mode: &str, oracle: bool) -> Result<()> {
    let section = config
        .fuse
        .as_ref()
        .context("config needs a [fuse] section")?;
    let estimator = config
        .estimator
        .clone()
        .unwrap_or_default()
        .to_config(config.seed)?;
    let variant = FusionVariant::parse(&section.variant)?;

    let inversion = match inverter_mode {
        "constant-linear" => Inversion::ConstantLinear,
        "learned" => {
            let path = section
                .inverter
                .as_ref()
                .context("[fuse] needs an inverter checkpoint for --inverter learned")?;
            Inversion::Learned(Box::new(InverterNetwork::load(path)?))
        }
        other => bail!("unknown inverter mode {other:?}"),
    };
    let fusion = if oracle {
        None
    } else {
        let path = section
            .fusion
            .as_ref()
            .context("[fuse] needs a fusion checkpoint unless --oracle is set")?;
        Some(FusionNetwork::<f64>::load(path, variant)?)
    };

    let samples = load_dataset(&section.dataset)?;
    ensure_dir(out_dir)?;
    config.write_resolved(out_dir)?;

    let fused_dir = out_dir.join("fused");
    let mut dropped_total = 0usize;
    for sample in &samples {
        let fw_est = estimate(sample, FlowDirection::Forward, &estimator)?;
        let bw_est = estimate(sample, FlowDirection::Backward, &estimator)?;
        let inverted = match &inversion {
            Inversion::Learned(net) => net.invert(&bw_est)?,
            Inversion::ConstantLinear => constant_linear_invert(&bw_est),
        };

        let fused = if let Some(fusion) = &fusion {
            let weights = fusion.predict_weights(&fw_est, &inverted)?;
            let occ_png = mean_occlusion_map_image(&weights);
            let occ_path = out_dir.join("occ").join(format!("{}_10.png", sample.id));
            ensure_dir(occ_path.parent().unwrap())?;
            occ_png
                .save(&occ_path)
                .with_context(|| format!("writing {}", occ_path.display()))?;
            if variant.per_channel() {
                for (c, name) in ["u", "v", "d0", "d1"].iter().enumerate() {
                    let path = out_dir
                        .join("occ")
                        .join(format!("{}_10_{}.png", sample.id, name));
                    occlusion_map_image(&weights.w_bw, c)
                        .save(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            weighted_average(&fw_est, &inverted, &weights)?
        } else {
            let (fused, selection) = oracle_fuse(
                &fw_est,
                &inverted,
                &sample.forward.field,
                &sample.forward.valid,
            )?;
            let sel_path = out_dir
                .join("selection")
                .join(format!("{}_10.png", sample.id));
            write_mask_png(&sel_path, &selection)?;
            fused
        };

        // pixels outside the codec range are written as invalid
        let writable = encodable_mask(&fused);
        dropped_total += writable.values().iter().filter(|&&v| !v).count();
        write_field(&fused_dir, &sample.id, &fused, &writable)?;
    }

    println!(
        "fused {} samples into {}",
        samples.len(),
        fused_dir.display()
    );
    if dropped_total > 0 {
        println!("warning: {dropped_total} pixels were outside the codec range and marked invalid");
    }
    Ok(())
}
