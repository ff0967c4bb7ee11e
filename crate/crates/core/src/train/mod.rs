//! Joint training of the embedding and restoration networks against a
//! multi-scale discriminator, plus datasets, checkpoints and evaluation
//! helpers.

mod data;
mod model;
mod trainer;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jpeg::JpegConfig;
use crate::losses::LossWeights;
use crate::mpi::PoseSamplerConfig;
use crate::nets::NetConfig;
use crate::perturb::{PerturbConfig, MIN_CROP};

pub use data::{
    generate_synthetic_scene, ingest_dataset, load_scene, save_scene, synthetic_scenes, Ingest,
    SceneRecord, TrainScene, PATCH_ALIGN, REFERENCE_FILE,
};
pub use model::{
    eval_edited, probe_scene, transmit, Channel, CheckpointKind, CheckpointMeta, Model, ModelCodec,
    CHECKPOINT_VERSION,
};
pub use trainer::{Batch, RunSummary, StepRecord, Trainer};

/// Stop once every training scene passes both probes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    /// Probe cadence in steps.
    pub every: u64,
    /// Embedding PSNR (dB) through the simulated JPEG channel.
    pub embed_psnr: f64,
    /// Identity-view restored-render PSNR (dB) through the same channel.
    pub render_psnr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Training patch size `[width, height]`.
    pub resolution: [usize; 2],
    pub batch_size: usize,
    pub steps: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub perturb: PerturbConfig,
    pub jpeg: JpegConfig,
    pub poses: PoseSamplerConfig,
    pub nets: NetConfig,
    pub dataset: Option<PathBuf>,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
    /// Weights for the perceptual feature extractor. Without them the
    /// extractor keeps its seeded random initialization.
    pub perceptual_weights: Option<PathBuf>,
    /// Plane depths recorded in exported models; defaults to the depths of
    /// the first training scene.
    pub depths: Option<Vec<f64>>,
    pub early_stop: Option<EarlyStop>,
    /// Stop after this many seconds of wall-clock time.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            resolution: [512, 288],
            batch_size: 4,
            steps: 200_000,
            lr_g: 1e-4,
            lr_d: 1e-4,
            seed: 0,
            weights: LossWeights::default(),
            perturb: PerturbConfig::default(),
            jpeg: JpegConfig::default(),
            poses: PoseSamplerConfig::default(),
            nets: NetConfig::default(),
            dataset: None,
            checkpoint_every: 5000,
            perceptual_weights: None,
            depths: None,
            early_stop: None,
            time_budget_secs: None,
        }
    }
}

impl TrainConfig {
    /// Laptop-scale preset: 128x72 patches, batch 2, at most 5000 steps or
    /// 30 minutes of the narrow network preset, stopping early once the
    /// probes pass.
    pub fn desk() -> Self {
        TrainConfig {
            resolution: [128, 72],
            batch_size: 2,
            steps: 5000,
            lr_g: 1e-3,
            lr_d: 1e-4,
            nets: NetConfig::desk(),
            checkpoint_every: 0,
            early_stop: Some(EarlyStop {
                every: 250,
                embed_psnr: 28.5,
                render_psnr: 28.5,
            }),
            time_budget_secs: Some(30.0 * 60.0),
            ..TrainConfig::default()
        }
    }

    pub fn width(&self) -> usize {
        self.resolution[0]
    }

    pub fn height(&self) -> usize {
        self.resolution[1]
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.resolution;
        if w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0 {
            return Err(Error::Config(format!(
                "resolution {w}x{h} must be non-zero multiples of 8"
            )));
        }
        if self.perturb.crop && (w < MIN_CROP || h < MIN_CROP) {
            return Err(Error::Config(format!(
                "cropping needs at least {MIN_CROP}x{MIN_CROP} patches"
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        for lr in [self.lr_g, self.lr_d] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Config(format!(
                    "learning rate {lr} must be positive"
                )));
            }
        }
        if let Some(d) = &self.depths {
            if d.len() != self.nets.num_planes {
                return Err(Error::Config(format!(
                    "{} depths for {} planes",
                    d.len(),
                    self.nets.num_planes
                )));
            }
        }
        if let Some(es) = &self.early_stop {
            if es.every == 0 {
                return Err(Error::Config("early-stop cadence must be positive".into()));
            }
        }
        if let Some(t) = self.time_budget_secs {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("time budget {t} must be positive")));
            }
        }
        self.weights.validate()?;
        self.perturb.validate()?;
        self.jpeg.validate()?;
        self.poses.validate()?;
        self.nets.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }
}
