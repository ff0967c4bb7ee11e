use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::jpeg::{jpeg_decode, jpeg_encode, jpeg_simulate, quantize_8bit, JpegConfig};
use crate::metrics::{psnr, MpiCodec, Scores};
use crate::mpi::{composite, render_novel_view, CameraModel, MpiStack, RelativePose};
use crate::nets::{Embedder, NetConfig, Restorer};
use crate::perturb::Perturbation;
use crate::tensor::Tensor;
use crate::weights::TensorArchive;

/// Version of the checkpoint metadata layout.
pub const CHECKPOINT_VERSION: u32 = 1;

const FORMAT_TAG: &str = "mpijpeg-checkpoint";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    /// Every network plus optimizer state.
    Full,
    /// The restoration network only.
    Decoder,
}

/// Metadata common to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub checkpoint_version: u32,
    pub kind: CheckpointKind,
    pub nets: NetConfig,
    pub depths: Vec<f64>,
    pub jpeg: JpegConfig,
}

impl CheckpointMeta {
    pub fn new(kind: CheckpointKind, nets: &NetConfig, depths: &[f64], jpeg: &JpegConfig) -> Self {
        CheckpointMeta {
            format: FORMAT_TAG.into(),
            checkpoint_version: CHECKPOINT_VERSION,
            kind,
            nets: nets.clone(),
            depths: depths.to_vec(),
            jpeg: *jpeg,
        }
    }

    /// Parses and checks the common fields of an archive's metadata.
    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let tag = archive.meta.get("format").and_then(|v| v.as_str());
        if tag != Some(FORMAT_TAG) {
            return Err(Error::CorruptCheckpoint("not an mpijpeg checkpoint".into()));
        }
        let version = archive
            .meta
            .get("checkpoint_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let meta: CheckpointMeta = serde_json::from_value(archive.meta.clone())
            .map_err(|e| Error::CorruptCheckpoint(format!("bad metadata: {e}")))?;
        meta.nets.validate()?;
        if meta.depths.len() != meta.nets.num_planes {
            return Err(Error::Architecture(format!(
                "{} depths for {} planes",
                meta.depths.len(),
                meta.nets.num_planes
            )));
        }
        Ok(meta)
    }
}

/// Trained networks for inference. A decoder-only model has no embedder.
#[derive(Clone, Debug)]
pub struct Model {
    pub embedder: Option<Embedder>,
    pub restorer: Restorer,
    pub depths: Vec<f64>,
    pub jpeg: JpegConfig,
}

impl Model {
    pub fn nets(&self) -> &NetConfig {
        self.restorer.config()
    }

    /// Loads either kind of checkpoint.
    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let archive = TensorArchive::read(path.as_ref())?;
        let meta = CheckpointMeta::from_archive(&archive)?;
        // weights are overwritten below; the seed only fixes the shapes
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut restorer = Restorer::new(&meta.nets, &mut rng);
        archive.load_store(&mut restorer.params)?;
        let embedder = match meta.kind {
            CheckpointKind::Full => {
                let mut e = Embedder::new(&meta.nets, &mut rng);
                archive.load_store(&mut e.params)?;
                Some(e)
            }
            CheckpointKind::Decoder => None,
        };
        Ok(Model {
            embedder,
            restorer,
            depths: meta.depths,
            jpeg: meta.jpeg,
        })
    }

    /// Writes the restoration network alone.
    pub fn save_decoder(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = CheckpointMeta::new(
            CheckpointKind::Decoder,
            self.nets(),
            &self.depths,
            &self.jpeg,
        );
        let mut archive = TensorArchive::new(serde_json::to_value(meta)?);
        archive.push_store(&self.restorer.params);
        archive.write(path.as_ref())
    }

    /// The raw embedding image in `[0, 1]`.
    pub fn embed(&self, mpi: &MpiStack, reference: &Image) -> Result<Image> {
        let embedder = self
            .embedder
            .as_ref()
            .ok_or_else(|| Error::Architecture("decoder-only model cannot embed".into()))?;
        if mpi.num_planes() != self.depths.len() {
            return Err(Error::shape(format!(
                "model expects {} planes, got {}",
                self.depths.len(),
                mpi.num_planes()
            )));
        }
        mpi.plane(0)
            .take_channels(3)?
            .ensure_same_shape(reference, "embed reference")?;
        let out = embedder.forward(&mpi.to_tensor::<f32>(), &reference.to_tensor::<f32>())?;
        Image::from_tensor(&out, 0)
    }

    /// Restores the planes of a received embedding image, attaching the
    /// model's plane depths.
    pub fn restore(&self, image: &Image) -> Result<MpiStack> {
        let rgb = match image.channels() {
            3 => image.clone(),
            4 => image.take_channels(3)?,
            c => {
                return Err(Error::shape(format!(
                    "cannot restore from a {c}-channel image"
                )))
            }
        };
        let out = self.restorer.forward(&rgb.to_tensor::<f32>())?;
        MpiStack::from_tensor(&out, 0, self.depths.clone())
    }
}

/// How an embedding image reaches the restorer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Channel {
    Lossless,
    /// 8-bit quantization and the differentiable JPEG simulation.
    Simulated(JpegConfig),
    /// The bit-exact JPEG encoder and decoder.
    Exact(JpegConfig),
}

pub fn transmit(image: &Image, channel: &Channel) -> Result<Image> {
    match channel {
        Channel::Lossless => Ok(image.clone()),
        Channel::Simulated(cfg) => {
            let t: Tensor = image.to_tensor();
            Image::from_tensor(&jpeg_simulate(&quantize_8bit(&t), cfg)?, 0)
        }
        Channel::Exact(cfg) => jpeg_decode(&jpeg_encode(image, cfg)?),
    }
}

/// A trained model behind a transmission channel.
pub struct ModelCodec<'a> {
    pub model: &'a Model,
    pub channel: Channel,
}

impl MpiCodec for ModelCodec<'_> {
    /// The embedding as received, i.e. after the channel.
    fn embed(&self, mpi: &MpiStack, reference: &Image) -> Result<Image> {
        transmit(&self.model.embed(mpi, reference)?, &self.channel)
    }

    fn restore(&self, embedding: &Image) -> Result<MpiStack> {
        self.model.restore(embedding)
    }
}

/// Restored-render quality after a set of image edits: the received
/// embedding is edited, restored and composited, and compared with the
/// composite of the ground truth cropped the same way.
pub fn eval_edited(
    model: &Model,
    mpi: &MpiStack,
    reference: &Image,
    channel: &Channel,
    edit: &Perturbation,
) -> Result<Scores> {
    let received = transmit(&model.embed(mpi, reference)?, channel)?;
    let edited = Image::from_tensor(&edit.apply(&received.to_tensor::<f32>())?, 0)?;
    let restored = model.restore(&edited)?;
    let r = edit.crop;
    let truth = composite(&mpi.crop(r.x, r.y, r.width, r.height)?);
    Scores::between(&composite(&restored), &truth)
}

/// Embedding and identity-view render PSNR of one scene.
pub fn probe_scene(
    model: &Model,
    mpi: &MpiStack,
    reference: &Image,
    channel: &Channel,
) -> Result<(f64, f64)> {
    let received = transmit(&model.embed(mpi, reference)?, channel)?;
    let restored = model.restore(&received)?;
    let cam = CameraModel::default_for(mpi.width(), mpi.height());
    let id = RelativePose::identity();
    Ok((
        psnr(&received, reference)?,
        psnr(
            &render_novel_view(&restored, &id, &cam)?,
            &render_novel_view(mpi, &id, &cam)?,
        )?,
    ))
}

pub(crate) fn meta_value(
    meta: &CheckpointMeta,
    extra: serde_json::Value,
) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(meta)?;
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    Ok(v)
}
