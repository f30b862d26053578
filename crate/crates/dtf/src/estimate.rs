//! Pluggable auxiliary scene-flow estimators.
//!
//! The pipeline treats the dual-frame estimator as a black box producing
//! forward and backward fields. Two kinds are provided: a noisy oracle that
//! perturbs ground truth with occlusion-correlated corruption (dual-frame
//! estimators fail hardest where the target view lost the pixel), and a
//! loader for precomputed fields on disk.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::{FlowDirection, SceneFlowField, CH_D0, CH_D1, CH_U, CH_V, FLOW_CHANNELS};
use crate::mask::{derive_occ_mask, PixelMask};
use crate::sample::FrameTripletSample;
use crate::scalar::Scalar;

/// How occluded pixels are corrupted by the noisy oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccCorruption {
    /// Add strong Gaussian noise (std `occ_sigma`) to all four channels.
    LargeNoise,
    /// Replace the pixel with the estimate of the nearest non-occluded
    /// pixel, imitating foreground values bleeding across the boundary.
    HoldOccluder,
}

impl OccCorruption {
    pub fn name(self) -> &'static str {
        match self {
            OccCorruption::LargeNoise => "large-noise",
            OccCorruption::HoldOccluder => "hold-occluder",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "large-noise" => Ok(OccCorruption::LargeNoise),
            "hold-occluder" => Ok(OccCorruption::HoldOccluder),
            _ => Err(Error::Config(format!("unknown occ corruption {s:?}"))),
        }
    }
}

/// Which estimator implementation to run.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorKind {
    NoisyOracle,
    /// Read precomputed fields from a directory in the dataset field layout.
    External { root: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Base noise on u, v everywhere (px).
    pub sigma_flow: f64,
    /// Base noise on d0, d1 everywhere (px).
    pub sigma_disp: f64,
    pub occ_corruption: OccCorruption,
    /// Noise for [`OccCorruption::LargeNoise`] (px).
    pub occ_sigma: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::NoisyOracle,
            sigma_flow: 0.4,
            sigma_disp: 0.3,
            occ_corruption: OccCorruption::LargeNoise,
            occ_sigma: 10.0,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, sigma) in [
            ("sigma_flow", self.sigma_flow),
            ("sigma_disp", self.sigma_disp),
            ("occ_sigma", self.occ_sigma),
        ] {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {sigma}")));
            }
        }
        Ok(())
    }
}

/// FNV-1a, fixed so noise streams are stable across platforms and versions.
fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Runs the configured estimator for one direction of a sample.
///
/// The noisy oracle derives its noise stream from (config seed, sample id,
/// direction), so repeated calls are identical and the two directions are
/// independent.
pub fn estimate<S: Scalar>(
    sample: &FrameTripletSample<S>,
    direction: FlowDirection,
    config: &EstimatorConfig,
) -> Result<SceneFlowField<S>> {
    config.validate()?;
    match &config.kind {
        EstimatorKind::NoisyOracle => noisy_oracle(sample, direction, config),
        EstimatorKind::External { root } => {
            let (field, valid) = load_external_field(root, &sample.id, direction)?;
            let mut field: SceneFlowField<S> = field.cast();
            // invalid pixels carry zeros; masks are available via load_external_field
            for i in 0..field.height() {
                for j in 0..field.width() {
                    if !valid.get(i, j) {
                        field.pixel_mut(i, j).fill(S::zero());
                    }
                }
            }
            Ok(field)
        }
    }
}

fn noisy_oracle<S: Scalar>(
    sample: &FrameTripletSample<S>,
    direction: FlowDirection,
    config: &EstimatorConfig,
) -> Result<SceneFlowField<S>> {
    let gt = sample.gt(direction)?;
    let (h, w) = (gt.field.height(), gt.field.width());
    let occ = derive_occ_mask(&gt.valid, &gt.noc)?;

    let dir_salt = match direction {
        FlowDirection::Forward => 0x66,
        FlowDirection::Backward => 0x77,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a(&sample.id) ^ dir_salt);
    let base_flow = Normal::new(0.0, config.sigma_flow).expect("validated sigma");
    let base_disp = Normal::new(0.0, config.sigma_disp).expect("validated sigma");
    let occ_noise = Normal::new(0.0, config.occ_sigma).expect("validated sigma");

    let mut grid = gt.field.grid().clone();
    for i in 0..h {
        for j in 0..w {
            let px = grid.pixel_mut(i, j);
            px[CH_U] += S::from_f64(base_flow.sample(&mut rng));
            px[CH_V] += S::from_f64(base_flow.sample(&mut rng));
            px[CH_D0] += S::from_f64(base_disp.sample(&mut rng));
            px[CH_D1] += S::from_f64(base_disp.sample(&mut rng));
        }
    }

    match config.occ_corruption {
        OccCorruption::LargeNoise => {
            for i in 0..h {
                for j in 0..w {
                    if occ.get(i, j) {
                        let px = grid.pixel_mut(i, j);
                        for c in 0..FLOW_CHANNELS {
                            px[c] += S::from_f64(occ_noise.sample(&mut rng));
                        }
                    }
                }
            }
        }
        OccCorruption::HoldOccluder => {
            let source = nearest_non_occluded(&occ);
            for i in 0..h {
                for j in 0..w {
                    if occ.get(i, j) {
                        if let Some((si, sj)) = source[i * w + j] {
                            let copied = grid.pixel(si, sj).to_vec();
                            grid.pixel_mut(i, j).copy_from_slice(&copied);
                        }
                    }
                }
            }
        }
    }

    SceneFlowField::new(grid, direction)
}

/// Multi-source BFS from all non-occluded pixels (4-neighborhood).
/// Returns, per pixel, the nearest non-occluded pixel, or None when the
/// whole image is occluded.
fn nearest_non_occluded(occ: &PixelMask) -> Vec<Option<(usize, usize)>> {
    let (h, w) = (occ.height(), occ.width());
    let mut source: Vec<Option<(usize, usize)>> = vec![None; h * w];
    let mut queue = VecDeque::new();
    for i in 0..h {
        for j in 0..w {
            if !occ.get(i, j) {
                source[i * w + j] = Some((i, j));
                queue.push_back((i, j));
            }
        }
    }
    while let Some((i, j)) = queue.pop_front() {
        let src = source[i * w + j];
        let mut visit = |ni: usize, nj: usize| {
            if source[ni * w + nj].is_none() {
                source[ni * w + nj] = src;
                queue.push_back((ni, nj));
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < h {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < w {
            visit(i, j + 1);
        }
    }
    source
}

/// Loads a precomputed field from the dataset field layout (flow, disp0,
/// disp1). Missing components error with the component name; the validity
/// mask is the AND of the component masks.
pub fn load_external_field(
    root: &Path,
    id: &str,
    direction: FlowDirection,
) -> Result<(SceneFlowField<f64>, PixelMask)> {
    crate::io::read_field(root, id, direction)
}
