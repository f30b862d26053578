//! TOML run configuration: plain sectioned key-value files that round-trip
//! losslessly. Every command writes the resolved config next to its outputs
//! so runs stay reproducible from the run directory alone.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dtf::estimate::{EstimatorConfig, EstimatorKind, OccCorruption};
use dtf::fuse::FusionVariant;
use dtf::synth::{CameraMotion, SceneDistribution};
use dtf::train::{RobustLossConfig, TrainSchedule};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; sections without their own seed inherit it.
    #[serde(default)]
    pub seed: u64,
    pub scene: Option<SceneSection>,
    pub dataset: Option<DatasetSection>,
    pub estimator: Option<EstimatorSection>,
    pub train: Option<TrainSection>,
    pub fuse: Option<FuseSection>,
    pub eval: Option<EvalSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub height: usize,
    pub width: usize,
    pub focal: f64,
    pub baseline: f64,
    pub background_depth: f64,
    pub n_objects: usize,
    pub extent: (f64, f64),
    pub depth: (f64, f64),
    pub speed: (f64, f64),
    #[serde(default)]
    pub speed_z: f64,
    #[serde(default)]
    pub accel_coupling: (f64, f64),
    #[serde(default)]
    pub accel_jitter: f64,
    #[serde(default)]
    pub camera_translation: [f64; 3],
    #[serde(default)]
    pub camera_yaw: f64,
    #[serde(default)]
    pub camera_pitch: f64,
}

impl SceneSection {
    pub fn to_distribution(&self) -> SceneDistribution {
        SceneDistribution {
            height: self.height,
            width: self.width,
            focal: self.focal,
            baseline: self.baseline,
            background_depth: self.background_depth,
            n_objects: self.n_objects,
            extent: self.extent,
            depth: self.depth,
            speed: self.speed,
            speed_z: self.speed_z,
            accel_coupling: self.accel_coupling,
            accel_jitter: self.accel_jitter,
            camera: CameraMotion {
                translation: self.camera_translation,
                yaw: self.camera_yaw,
                pitch: self.camera_pitch,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub count: usize,
    #[serde(default = "default_split")]
    pub split: String,
}

fn default_split() -> String {
    "train".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default = "default_estimator_kind")]
    pub kind: String,
    pub external_root: Option<PathBuf>,
    #[serde(default = "default_sigma_flow")]
    pub sigma_flow: f64,
    #[serde(default = "default_sigma_disp")]
    pub sigma_disp: f64,
    #[serde(default = "default_occ_corruption")]
    pub occ_corruption: String,
    #[serde(default = "default_occ_sigma")]
    pub occ_sigma: f64,
    pub seed: Option<u64>,
}

fn default_estimator_kind() -> String {
    "noisy-oracle".into()
}
fn default_sigma_flow() -> f64 {
    0.4
}
fn default_sigma_disp() -> f64 {
    0.3
}
fn default_occ_corruption() -> String {
    "large-noise".into()
}
fn default_occ_sigma() -> f64 {
    10.0
}

impl EstimatorSection {
    pub fn to_config(&self, global_seed: u64) -> Result<EstimatorConfig> {
        let kind = match self.kind.as_str() {
            "noisy-oracle" => EstimatorKind::NoisyOracle,
            "external" => EstimatorKind::External {
                root: self
                    .external_root
                    .clone()
                    .context("estimator kind \"external\" needs external_root")?,
            },
            other => bail!("unknown estimator kind {other:?}"),
        };
        let config = EstimatorConfig {
            kind,
            sigma_flow: self.sigma_flow,
            sigma_disp: self.sigma_disp,
            occ_corruption: OccCorruption::parse(&self.occ_corruption)?,
            occ_sigma: self.occ_sigma,
            seed: self.seed.unwrap_or(global_seed),
        };
        config.validate()?;
        Ok(config)
    }
}

impl Default for EstimatorSection {
    fn default() -> Self {
        EstimatorSection {
            kind: default_estimator_kind(),
            external_root: None,
            sigma_flow: default_sigma_flow(),
            sigma_disp: default_sigma_disp(),
            occ_corruption: default_occ_corruption(),
            occ_sigma: default_occ_sigma(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Manifest of the training dataset.
    pub dataset: PathBuf,
    /// Separate validation manifest; otherwise `val_fraction` splits the
    /// tail off the training dataset.
    pub val_dataset: Option<PathBuf>,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Schedule preset: "desk", "paper-inverter", "paper-finetune".
    #[serde(default = "default_preset")]
    pub preset: String,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr_stages: Option<Vec<(usize, f64)>>,
    #[serde(default = "default_variant")]
    pub variant: String,
    /// Checkpoint to initialize the inverter from (pipeline training).
    pub inverter_init: Option<PathBuf>,
    /// Robust loss parameters for pipeline training.
    #[serde(default = "default_loss_epsilon")]
    pub loss_epsilon: f64,
    #[serde(default = "default_loss_q")]
    pub loss_q: f64,
}

fn default_val_fraction() -> f64 {
    0.2
}
fn default_preset() -> String {
    "desk".into()
}
fn default_variant() -> String {
    "basic".into()
}
fn default_loss_epsilon() -> f64 {
    0.01
}
fn default_loss_q() -> f64 {
    0.4
}

impl TrainSection {
    pub fn schedule(&self, global_seed: u64) -> Result<TrainSchedule> {
        let mut schedule = TrainSchedule::parse_preset(&self.preset)?;
        if let Some(epochs) = self.epochs {
            schedule.epochs = epochs;
        }
        if let Some(batch) = self.batch_size {
            schedule.batch_size = batch;
        }
        if let Some(stages) = &self.lr_stages {
            schedule.lr_stages = stages.clone();
        }
        schedule.seed = global_seed;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn variant(&self) -> Result<FusionVariant> {
        Ok(FusionVariant::parse(&self.variant)?)
    }

    pub fn loss(&self) -> Result<RobustLossConfig> {
        let cfg = RobustLossConfig {
            epsilon: self.loss_epsilon,
            q: self.loss_q,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuseSection {
    pub dataset: PathBuf,
    pub inverter: Option<PathBuf>,
    pub fusion: Option<PathBuf>,
    #[serde(default = "default_variant")]
    pub variant: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub dataset: PathBuf,
    pub estimates: PathBuf,
    /// Also render flow color-wheel images.
    #[serde(default)]
    pub flow_viz: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(config)
    }

    /// Writes the resolved config (flag overrides applied) into the run
    /// directory for provenance.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing resolved config")?;
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating {}", out_dir.display()))?;
        std::fs::write(out_dir.join("config.toml"), text).context("writing resolved config")?;
        Ok(())
    }
}
