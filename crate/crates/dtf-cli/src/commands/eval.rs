//! `dtf eval`: outlier rates, error maps, optional flow renderings.

use std::path::Path;

use anyhow::{bail, Context, Result};

use dtf::flow::FlowDirection;
use dtf::io::read_field;
use dtf::metrics::{
    aggregate, evaluate, reconstruct_occ_rate, sf_outlier_map, EvalReport, NocRatio, Region,
    SfComponent,
};
use dtf::viz::{error_map_image, flow_color_image};

use crate::commands::{ensure_dir, load_dataset, write_text};
use crate::config::RunConfig;

/// Parses the `ratio=R` argument of `--reconstruct-occ`.
pub fn parse_ratio(spec: &str) -> Result<NocRatio> {
    let value = spec.strip_prefix("ratio=").unwrap_or(spec);
    let parsed: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("cannot parse ratio from {spec:?}"))?;
    Ok(NocRatio::new(parsed)?)
}

pub fn run(config: &RunConfig, out_dir: &Path, reconstruct: Option<NocRatio>) -> Result<()> {
    let section = config
        .eval
        .as_ref()
        .context("config needs an [eval] section")?;
    let samples = load_dataset(&section.dataset)?;
    if samples.is_empty() {
        bail!("dataset is empty");
    }
    ensure_dir(out_dir)?;
    config.write_resolved(out_dir)?;

    let mut reports = Vec::with_capacity(samples.len());
    for sample in &samples {
        let (mut est, est_valid) =
            read_field(&section.estimates, &sample.id, FlowDirection::Forward)?;
        // pixels the estimate does not cover count as outliers
        for i in 0..est.height() {
            for j in 0..est.width() {
                if !est_valid.get(i, j) {
                    est.pixel_mut(i, j).fill(f64::NAN);
                }
            }
        }
        let gt = &sample.forward;
        let report = evaluate(&est, &gt.field, &gt.valid, &gt.noc)?;
        write_text(
            &out_dir.join("reports").join(format!("{}.txt", sample.id)),
            &report.to_text(),
        )?;

        let outliers = sf_outlier_map(&est, &gt.field, &gt.valid)?;
        let map = error_map_image(&outliers, &gt.valid);
        let map_path = out_dir
            .join("error_maps")
            .join(format!("{}_10.png", sample.id));
        ensure_dir(map_path.parent().unwrap())?;
        map.save(&map_path)
            .with_context(|| format!("writing {}", map_path.display()))?;

        if section.flow_viz {
            let (img, norm) = flow_color_image(&est, Some(&gt.valid), None);
            let viz_path = out_dir
                .join("flow_viz")
                .join(format!("{}_10_max{:.1}.png", sample.id, norm));
            ensure_dir(viz_path.parent().unwrap())?;
            img.save(&viz_path)
                .with_context(|| format!("writing {}", viz_path.display()))?;
        }

        reports.push(report);
    }

    let total = aggregate(&reports)?;
    let mut text = total.to_text();
    if let Some(ratio) = reconstruct {
        text.push_str(&reconstruction_lines(&total, ratio));
    }
    write_text(&out_dir.join("report.txt"), &text)?;

    println!("evaluated {} samples", samples.len());
    for comp in SfComponent::ALL {
        let mut line = format!("{comp}:");
        for region in Region::ALL {
            match total.rate(comp, region) {
                Some(rate) => line.push_str(&format!(" {region} {rate:6.2}")),
                None => line.push_str(&format!(" {region}   --  ")),
            }
        }
        println!("{line}");
    }
    if let Some(ratio) = reconstruct {
        print!("{}", reconstruction_lines(&total, ratio));
    }
    Ok(())
}

/// Occluded-only rates reconstructed from the all/noc pair of each
/// component, rendered as extra report lines.
fn reconstruction_lines(report: &EvalReport, ratio: NocRatio) -> String {
    let mut out = String::new();
    for comp in SfComponent::ALL {
        if let (Some(all), Some(noc)) = (
            report.rate(comp, Region::All),
            report.rate(comp, Region::Noc),
        ) {
            let occ = reconstruct_occ_rate(all, noc, ratio);
            out.push_str(&format!(
                "{comp}.occ_reconstructed = {occ:.4} (ratio {})\n",
                ratio.value()
            ));
            if occ < 0.0 {
                out.push_str(&format!(
                    "# warning: negative reconstruction for {comp}; all/noc rates are inconsistent\n"
                ));
            }
        }
    }
    out
}
