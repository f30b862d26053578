//! Dataset persistence: KITTI-format PNGs, directory layout, manifests.
//!
//! Per-sample layout under a dataset root:
//! ```text
//! image_2/<id>_{09,10,11}.png   left images at t-1, t, t+1
//! image_3/<id>_{09,10,11}.png   right images
//! flow_fw/<id>_10.png           forward optical flow (u, v, valid)
//! flow_bw/<id>_10.png           backward optical flow
//! disp0/<id>_10.png             reference disparity
//! disp1_fw/<id>_10.png          target disparity, forward
//! disp1_bw/<id>_10.png          target disparity, backward
//! mask_noc_fw/<id>_10.png       non-occluded mask, forward
//! mask_noc_bw/<id>_10.png       non-occluded mask, backward
//! manifest.txt                  split tag plus one sample id per line
//! ```
//! Estimate directories reuse the same field layout (flow, disp0, disp1),
//! so externally produced results drop in without conversion.

pub mod png_codec;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField, CH_D0, CH_D1, CH_U, CH_V};
use crate::grid::Grid2D;
use crate::mask::{MaskKind, PixelMask};
use crate::sample::{DirectionalGt, FrameTripletSample};

const FRAME_SUFFIX: [&str; 3] = ["09", "10", "11"];

/// Path helpers for the fixed directory layout.
pub mod layout {
    use super::*;

    pub fn left_image(root: &Path, id: &str, frame: usize) -> PathBuf {
        root.join("image_2")
            .join(format!("{id}_{}.png", FRAME_SUFFIX[frame]))
    }

    pub fn right_image(root: &Path, id: &str, frame: usize) -> PathBuf {
        root.join("image_3")
            .join(format!("{id}_{}.png", FRAME_SUFFIX[frame]))
    }

    pub fn flow(root: &Path, id: &str, direction: FlowDirection) -> PathBuf {
        root.join(format!("flow_{}", direction.tag()))
            .join(format!("{id}_10.png"))
    }

    pub fn disp0(root: &Path, id: &str) -> PathBuf {
        root.join("disp0").join(format!("{id}_10.png"))
    }

    pub fn disp1(root: &Path, id: &str, direction: FlowDirection) -> PathBuf {
        root.join(format!("disp1_{}", direction.tag()))
            .join(format!("{id}_10.png"))
    }

    pub fn noc_mask(root: &Path, id: &str, direction: FlowDirection) -> PathBuf {
        root.join(format!("mask_noc_{}", direction.tag()))
            .join(format!("{id}_10.png"))
    }

    pub fn manifest(root: &Path) -> PathBuf {
        root.join("manifest.txt")
    }
}

/// Dataset split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// One manifest entry. Paths are derived from the id and the fixed layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
}

/// A loaded dataset manifest; every mandatory file was checked to exist.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub split: Split,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Writes one directional field (flow + disparities) in the estimate/gt
/// layout under `root`.
pub fn write_field(
    root: &Path,
    id: &str,
    field: &SceneFlowField<f64>,
    valid: &PixelMask,
) -> Result<()> {
    let direction = field.direction();
    let flow = field.grid().slice_channels(CH_U..CH_V + 1);
    png_codec::write_flow_png(&layout::flow(root, id, direction), &flow, valid)?;
    png_codec::write_disparity_png(
        &layout::disp0(root, id),
        &field.grid().slice_channels(CH_D0..CH_D0 + 1),
        valid,
    )?;
    png_codec::write_disparity_png(
        &layout::disp1(root, id, direction),
        &field.grid().slice_channels(CH_D1..CH_D1 + 1),
        valid,
    )?;
    Ok(())
}

fn missing(what: &str, id: &str, path: &Path) -> Error {
    Error::MissingFile {
        what: what.into(),
        sample: id.into(),
        path: path.to_path_buf(),
    }
}

fn read_component<T>(
    path: &Path,
    what: &str,
    id: &str,
    reader: impl Fn(&Path) -> Result<T>,
) -> Result<T> {
    if !path.exists() {
        return Err(missing(what, id, path));
    }
    reader(path)
}

/// Reads one directional field; validity is the AND of the component masks.
/// Invalid pixels hold zeros.
pub fn read_field(
    root: &Path,
    id: &str,
    direction: FlowDirection,
) -> Result<(SceneFlowField<f64>, PixelMask)> {
    let (flow, flow_valid) = read_component(
        &layout::flow(root, id, direction),
        &format!("flow_{}", direction.tag()),
        id,
        png_codec::read_flow_png,
    )?;
    let (d0, d0_valid) = read_component(
        &layout::disp0(root, id),
        "disp0",
        id,
        png_codec::read_disparity_png,
    )?;
    let (d1, d1_valid) = read_component(
        &layout::disp1(root, id, direction),
        &format!("disp1_{}", direction.tag()),
        id,
        png_codec::read_disparity_png,
    )?;
    let (h, w) = (flow.height(), flow.width());
    if d0.shape() != (h, w, 1) || d1.shape() != (h, w, 1) {
        return Err(Error::ShapeMismatch {
            context: "read_field: component sizes differ",
            expected: (h, w, 1),
            got: d0.shape(),
        });
    }
    let valid = flow_valid.and(&d0_valid)?.and(&d1_valid)?;
    let mut grid = Grid2D::new(h, w, 4);
    for i in 0..h {
        for j in 0..w {
            let px = grid.pixel_mut(i, j);
            px[CH_U] = flow.get(i, j, 0);
            px[CH_V] = flow.get(i, j, 1);
            px[CH_D0] = d0.get(i, j, 0);
            px[CH_D1] = d1.get(i, j, 0);
        }
    }
    Ok((SceneFlowField::new(grid, direction)?, valid))
}

/// Persists a full sample (images, ground truth, masks).
pub fn write_sample(root: &Path, sample: &FrameTripletSample<f64>) -> Result<()> {
    sample.validate()?;
    let id = &sample.id;
    for frame in 0..3 {
        png_codec::write_gray_png(&layout::left_image(root, id, frame), &sample.left[frame])?;
        png_codec::write_gray_png(&layout::right_image(root, id, frame), &sample.right[frame])?;
    }
    write_field(root, id, &sample.forward.field, &sample.forward.valid)?;
    png_codec::write_mask_png(
        &layout::noc_mask(root, id, FlowDirection::Forward),
        &sample.forward.noc,
    )?;
    if let Some(bw) = &sample.backward {
        write_field(root, id, &bw.field, &bw.valid)?;
        png_codec::write_mask_png(&layout::noc_mask(root, id, FlowDirection::Backward), &bw.noc)?;
    }
    Ok(())
}

/// Loads a full sample. Backward ground truth is optional: if none of its
/// files exist the sample is flagged backward-absent, a partial set is an
/// error naming the missing component.
pub fn read_sample(root: &Path, id: &str) -> Result<FrameTripletSample<f64>> {
    let mut left = Vec::with_capacity(3);
    let mut right = Vec::with_capacity(3);
    for frame in 0..3 {
        left.push(read_component(
            &layout::left_image(root, id, frame),
            "left image",
            id,
            png_codec::read_gray_png,
        )?);
        right.push(read_component(
            &layout::right_image(root, id, frame),
            "right image",
            id,
            png_codec::read_gray_png,
        )?);
    }
    let (fw_field, fw_valid) = read_field(root, id, FlowDirection::Forward)?;
    let fw_noc = read_component(
        &layout::noc_mask(root, id, FlowDirection::Forward),
        "mask_noc_fw",
        id,
        |p| png_codec::read_mask_png(p, MaskKind::Noc),
    )?;
    let forward = DirectionalGt {
        field: fw_field,
        valid: fw_valid,
        noc: fw_noc,
    };

    let bw_paths = [
        layout::flow(root, id, FlowDirection::Backward),
        layout::disp1(root, id, FlowDirection::Backward),
        layout::noc_mask(root, id, FlowDirection::Backward),
    ];
    let present = bw_paths.iter().filter(|p| p.exists()).count();
    let backward = match present {
        0 => None,
        3 => {
            let (field, valid) = read_field(root, id, FlowDirection::Backward)?;
            let noc = png_codec::read_mask_png(&bw_paths[2], MaskKind::Noc)?;
            Some(DirectionalGt { field, valid, noc })
        }
        _ => {
            let gone = bw_paths.iter().find(|p| !p.exists()).unwrap();
            return Err(missing("backward ground truth component", id, gone));
        }
    };

    let sample = FrameTripletSample {
        id: id.to_string(),
        left: [left.remove(0), left.remove(0), left.remove(0)],
        right: [right.remove(0), right.remove(0), right.remove(0)],
        forward,
        backward,
    };
    sample.validate()?;
    Ok(sample)
}

/// Writes samples plus a manifest under `root` and returns the manifest.
pub fn write_dataset(
    root: &Path,
    split: Split,
    samples: &[FrameTripletSample<f64>],
) -> Result<DatasetManifest> {
    for sample in samples {
        write_sample(root, sample)?;
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        split,
        samples: samples
            .iter()
            .map(|s| SampleRecord { id: s.id.clone() })
            .collect(),
    };
    save_manifest(&manifest)?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest) -> Result<()> {
    let path = layout::manifest(&manifest.root);
    let mut text = String::from("# dtf dataset manifest v1\n");
    text.push_str(&format!("split = {}\n", manifest.split.name()));
    for record in &manifest.samples {
        text.push_str(&record.id);
        text.push('\n');
    }
    std::fs::create_dir_all(&manifest.root).map_err(|source| Error::Io {
        path: manifest.root.clone(),
        source,
    })?;
    std::fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

/// Parses a manifest file and verifies that every mandatory file of every
/// listed sample exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut split = None;
    let mut samples = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(value) = line.strip_prefix("split") {
            let value = value
                .trim_start()
                .strip_prefix('=')
                .ok_or_else(|| Error::Manifest {
                    path: path.to_path_buf(),
                    reason: format!("malformed split line: {line}"),
                })?;
            split = Some(Split::parse(value.trim())?);
        } else {
            samples.push(SampleRecord {
                id: line.to_string(),
            });
        }
    }
    let split = split.ok_or_else(|| Error::Manifest {
        path: path.to_path_buf(),
        reason: "missing split header".into(),
    })?;

    for record in &samples {
        let id = &record.id;
        let mut mandatory = vec![
            layout::flow(&root, id, FlowDirection::Forward),
            layout::disp0(&root, id),
            layout::disp1(&root, id, FlowDirection::Forward),
            layout::noc_mask(&root, id, FlowDirection::Forward),
        ];
        for frame in 0..3 {
            mandatory.push(layout::left_image(&root, id, frame));
            mandatory.push(layout::right_image(&root, id, frame));
        }
        for p in mandatory {
            if !p.exists() {
                return Err(missing("dataset file", id, &p));
            }
        }
    }
    Ok(DatasetManifest {
        root,
        split,
        samples,
    })
}

/// Lazily loads the samples of a manifest in listed order.
pub fn iterate_samples(
    manifest: &DatasetManifest,
) -> impl Iterator<Item = Result<FrameTripletSample<f64>>> + '_ {
    manifest
        .samples
        .iter()
        .map(move |record| read_sample(&manifest.root, &record.id))
}

/// Eagerly loads all samples of a manifest.
pub fn load_samples(manifest: &DatasetManifest) -> Result<Vec<FrameTripletSample<f64>>> {
    iterate_samples(manifest).collect()
}
