use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::data::TrainScene;
use super::model::{meta_value, probe_scene, Channel, CheckpointKind, CheckpointMeta, Model};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::jpeg::{jpeg_simulate, quantize_8bit};
use crate::losses::{
    loss_adversarial_d, loss_adversarial_g, loss_freq, loss_perceptual, loss_reg, loss_render,
    loss_restore, total_g_tensor, LossTensors, LossTerms,
};
use crate::metrics::psnr_from_mse;
use crate::mpi::{
    composite_tensor, default_depths, sample_render_pose, CameraModel, MpiStack, RelativePose,
};
use crate::nets::{Discriminator, Embedder, Perceptual, Restorer};
use crate::perturb::{crop_tensor, CropRect, Perturbation};
use crate::tensor::{Adam, AdamConfig, ParamStore, Tensor};
use crate::weights::TensorArchive;

/// Streams at and above this index seed the per-epoch scene shuffles.
const EPOCH_STREAM: u64 = 1 << 63;
const INIT_STREAM: u64 = u64::MAX;

/// Every random draw of a run comes from `(seed, stream)`, so a resumed run
/// needs no generator state: step `s` draws its batch from stream `2s` and
/// its pose and edits from stream `2s + 1`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A training batch as tensors plus per-sample geometry.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[N, 4P, H, W]`
    pub mpi: Tensor,
    /// `[N, 3, H, W]`
    pub reference: Tensor,
    pub depths: Vec<Vec<f64>>,
    pub cameras: Vec<CameraModel>,
}

impl Batch {
    pub fn from_scenes(scenes: &[TrainScene]) -> Result<Batch> {
        if scenes.is_empty() {
            return Err(Error::Dataset("empty batch".into()));
        }
        let mpis: Vec<&MpiStack> = scenes.iter().map(|s| &s.mpi).collect();
        let refs: Vec<&Image> = scenes.iter().map(|s| &s.reference).collect();
        Ok(Batch {
            mpi: MpiStack::batch_to_tensor(&mpis)?,
            reference: Image::batch_to_tensor(&refs)?,
            depths: scenes.iter().map(|s| s.mpi.depths().to_vec()).collect(),
            cameras: scenes.iter().map(|s| s.camera).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    fn uniform_geometry(&self) -> bool {
        self.depths.iter().all(|d| *d == self.depths[0])
            && self.cameras.iter().all(|c| *c == self.cameras[0])
    }
}

/// Losses and probes of one step; one CSV row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    /// Empty while the adversarial weight is zero and the discriminator
    /// rests.
    pub loss_d: Option<f64>,
    pub reg: f64,
    pub perceptual: f64,
    pub freq: f64,
    pub restore: f64,
    pub render: f64,
    pub adversarial: f64,
    pub total_g: f64,
    /// Raw embedding against the reference.
    pub psnr_embed: f64,
    /// Composite of the restored patch against the composite of the
    /// ground truth; empty when the restorer is not evaluated.
    pub psnr_render: Option<f64>,
}

impl StepRecord {
    pub fn terms(&self) -> LossTerms {
        LossTerms {
            reg: self.reg,
            perceptual: self.perceptual,
            freq: self.freq,
            restore: self.restore,
            render: self.render,
            adversarial: self.adversarial,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub steps: u64,
    pub stopped_early: bool,
    /// The wall-clock budget ran out before `steps`.
    pub out_of_time: bool,
    pub elapsed_secs: f64,
    /// Last `(embed, render)` probe per scene, if any ran.
    pub probes: Vec<(f64, f64)>,
    pub last: Option<StepRecord>,
}

/// The full training state: networks, optimizers and the step counter.
pub struct Trainer {
    config: TrainConfig,
    pub embedder: Embedder,
    pub restorer: Restorer,
    pub discriminator: Discriminator,
    perceptual: Perceptual,
    opt_embedder: Adam,
    opt_restorer: Adam,
    opt_discriminator: Adam,
    depths: Vec<f64>,
    step: u64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Trainer> {
        Self::build(config, true)
    }

    fn build(config: TrainConfig, load_perceptual: bool) -> Result<Trainer> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, INIT_STREAM);
        let nets = &config.nets;
        let embedder = Embedder::new(nets, &mut rng);
        let restorer = Restorer::new(nets, &mut rng);
        let discriminator = Discriminator::new(nets, &mut rng);
        let mut perceptual = Perceptual::new(nets, &mut rng);
        if let (true, Some(path)) = (load_perceptual, &config.perceptual_weights) {
            perceptual.load_weights(path)?;
        }
        perceptual.params.freeze();
        let adam = |lr: f64, store: &ParamStore| {
            Adam::new(
                AdamConfig {
                    lr,
                    ..AdamConfig::default()
                },
                store,
            )
        };
        Ok(Trainer {
            opt_embedder: adam(config.lr_g, &embedder.params),
            opt_restorer: adam(config.lr_g, &restorer.params),
            opt_discriminator: adam(config.lr_d, &discriminator.params),
            depths: config
                .depths
                .clone()
                .unwrap_or_else(|| default_depths(nets.num_planes)),
            embedder,
            restorer,
            discriminator,
            perceptual,
            config,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Changes the step count a [`Trainer::run`] trains up to.
    pub fn set_steps(&mut self, steps: u64) {
        self.config.steps = steps;
    }

    /// Steps completed so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    /// A snapshot of the current networks for inference.
    pub fn model(&self) -> Model {
        Model {
            embedder: Some(self.embedder.clone()),
            restorer: self.restorer.clone(),
            depths: self.depths.clone(),
            jpeg: self.config.jpeg,
        }
    }

    /// The batch for the current step: scenes are visited in a fresh
    /// shuffled order every epoch and cut into aligned random patches.
    pub fn sample_batch(&self, scenes: &[TrainScene]) -> Result<Batch> {
        if scenes.is_empty() {
            return Err(Error::Dataset("no training scenes".into()));
        }
        let (n, len) = (self.config.batch_size as u64, scenes.len() as u64);
        let mut rng = stream_rng(self.config.seed, 2 * self.step);
        let mut order: Option<(u64, Vec<usize>)> = None;
        let mut picked = Vec::with_capacity(n as usize);
        for k in self.step * n..(self.step + 1) * n {
            let epoch = k / len;
            if order.as_ref().map(|o| o.0) != Some(epoch) {
                let mut perm: Vec<usize> = (0..scenes.len()).collect();
                perm.shuffle(&mut stream_rng(self.config.seed, EPOCH_STREAM + epoch));
                order = Some((epoch, perm));
            }
            let scene = &scenes[order.as_ref().unwrap().1[(k % len) as usize]];
            picked.push(scene.patch(self.config.width(), self.config.height(), &mut rng)?);
        }
        Batch::from_scenes(&picked)
    }

    /// One discriminator update on the reference against the detached
    /// embedding, then one generator update through quantization, JPEG
    /// simulation, colour jitter, crop and restoration.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepRecord> {
        let step = self.step;
        let w = self.config.weights;
        let (n, _, h, width) = batch.reference.dims4();
        let mut rng = stream_rng(self.config.seed, 2 * step + 1);
        let pose = sample_render_pose(&self.config.poses, &mut rng);
        let edit = Perturbation::sample(&self.config.perturb, n, width, h, &mut rng)?;

        let embedding = self.embedder.forward(&batch.mpi, &batch.reference)?;

        let loss_d = if w.adversarial > 0.0 {
            let real = self.discriminator.forward(&batch.reference)?;
            let fake = self.discriminator.forward(&embedding.detach())?;
            let ld = loss_adversarial_d(&real, &fake)?;
            let v = ld.item() as f64;
            if !v.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    terms: format!("{{\"loss_d\": {v}}}"),
                });
            }
            let grads = ld.backward();
            self.opt_discriminator
                .step(&mut self.discriminator.params, &grads);
            Some(v)
        } else {
            None
        };

        let (terms, psnr_render) = self.generator_terms(batch, &embedding, &pose, &edit)?;
        let values = terms.values();
        let total = total_g_tensor(&terms, &w);
        let total_g = total.item() as f64;
        if !values.all_finite() || !total_g.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                terms: serde_json::to_string(&values)?,
            });
        }
        let grads = total.backward();
        self.opt_embedder.step(&mut self.embedder.params, &grads);
        self.opt_restorer.step(&mut self.restorer.params, &grads);
        self.step += 1;

        let mse = embedding
            .data()
            .iter()
            .zip(batch.reference.data())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / embedding.numel() as f64;
        Ok(StepRecord {
            step,
            loss_d,
            reg: values.reg,
            perceptual: values.perceptual,
            freq: values.freq,
            restore: values.restore,
            render: values.render,
            adversarial: values.adversarial,
            total_g,
            psnr_embed: psnr_from_mse(mse),
            psnr_render,
        })
    }

    /// Unweighted generator terms. The restoration branch is evaluated only
    /// when the restore or render weight is non-zero, and the adversarial
    /// term only when its weight is; skipped terms are constant zeros.
    pub fn generator_terms(
        &self,
        batch: &Batch,
        embedding: &Tensor,
        pose: &RelativePose,
        edit: &Perturbation,
    ) -> Result<(LossTensors, Option<f64>)> {
        let w = &self.config.weights;
        let zero = || Tensor::scalar(0.0f32);
        let reference = &batch.reference;
        let adversarial = if w.adversarial > 0.0 {
            loss_adversarial_g(&self.discriminator.forward(embedding)?)?
        } else {
            zero()
        };
        let (restore, render, probe) = if w.restore > 0.0 || w.render > 0.0 {
            let received = edit.apply(&jpeg_simulate(
                &quantize_8bit(embedding),
                &self.config.jpeg,
            )?)?;
            let restored = self.restorer.forward(&received)?;
            let truth = crop_tensor(&batch.mpi, &edit.crop)?;
            let restore = if w.restore > 0.0 {
                loss_restore(&restored, &truth, w.rgb)?
            } else {
                zero()
            };
            let render = if w.render > 0.0 {
                self.render_loss(batch, &restored, &truth, pose, &edit.crop)?
            } else {
                zero()
            };
            let ours = composite_tensor(&restored.detach())?;
            let target = composite_tensor(&truth)?;
            let probe = psnr_from_mse(ours.mse(&target).item() as f64);
            (restore, render, Some(probe))
        } else {
            (zero(), zero(), None)
        };
        Ok((
            LossTensors {
                reg: loss_reg(embedding, reference)?,
                perceptual: loss_perceptual(embedding, reference, &self.perceptual)?,
                freq: loss_freq(embedding, reference)?,
                restore,
                render,
                adversarial,
            },
            probe,
        ))
    }

    fn render_loss(
        &self,
        batch: &Batch,
        restored: &Tensor,
        truth: &Tensor,
        pose: &RelativePose,
        crop: &CropRect,
    ) -> Result<Tensor> {
        let w = &self.config.weights;
        let features = (w.render_perceptual > 0.0).then_some(&self.perceptual);
        if batch.uniform_geometry() {
            let cam = batch.cameras[0].cropped(crop.x, crop.y);
            return loss_render(restored, truth, &batch.depths[0], pose, &cam, features, w);
        }
        let n = batch.len();
        let parts = (0..n)
            .map(|i| {
                let cam = batch.cameras[i].cropped(crop.x, crop.y);
                loss_render(
                    &restored.narrow(0, i, 1),
                    &truth.narrow(0, i, 1),
                    &batch.depths[i],
                    pose,
                    &cam,
                    features,
                    w,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::sum_n(&parts.iter().collect::<Vec<_>>()).scale(1.0 / n as f64))
    }

    /// `(embed, render)` PSNR of every scene through the simulated channel.
    pub fn probe(&self, scenes: &[TrainScene]) -> Result<Vec<(f64, f64)>> {
        let model = self.model();
        let channel = Channel::Simulated(self.config.jpeg);
        scenes
            .iter()
            .map(|s| probe_scene(&model, &s.mpi, &s.reference, &channel))
            .collect()
    }

    /// Trains until the configured step count or the early-stop condition.
    /// With an output directory, writes `metrics.csv`, periodic checkpoints
    /// and finally `checkpoint.mpij` and `decoder.mpij`.
    pub fn run(&mut self, scenes: &[TrainScene], out_dir: Option<&Path>) -> Result<RunSummary> {
        let start = Instant::now();
        let mut csv = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                let path = dir.join("metrics.csv");
                Some((
                    csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?,
                    path,
                ))
            }
            None => None,
        };
        let mut summary = RunSummary::default();
        while self.step < self.config.steps {
            let batch = self.sample_batch(scenes)?;
            let record = self.train_step(&batch)?;
            if let Some((writer, path)) = csv.as_mut() {
                writer.serialize(record).map_err(|e| csv_error(path, e))?;
            }
            if record.step % 100 == 0 {
                log::info!(
                    "step {} total {:.4} embed {:.2} dB render {:?} dB",
                    record.step,
                    record.total_g,
                    record.psnr_embed,
                    record.psnr_render
                );
            }
            summary.last = Some(record);
            if let (Some(dir), true) = (out_dir, self.config.checkpoint_every > 0) {
                if self.step.is_multiple_of(self.config.checkpoint_every) {
                    self.save_checkpoint(dir.join(format!("checkpoint-{:06}.mpij", self.step)))?;
                }
            }
            if let Some(es) = self.config.early_stop {
                if self.step.is_multiple_of(es.every) {
                    summary.probes = self.probe(scenes)?;
                    log::info!("step {} probes {:?}", self.step, summary.probes);
                    if summary
                        .probes
                        .iter()
                        .all(|&(e, r)| e >= es.embed_psnr && r >= es.render_psnr)
                    {
                        summary.stopped_early = true;
                        break;
                    }
                }
            }
            if let Some(budget) = self.config.time_budget_secs {
                if start.elapsed().as_secs_f64() >= budget {
                    summary.out_of_time = true;
                    break;
                }
            }
        }
        if let Some((mut writer, path)) = csv {
            writer.flush().map_err(|e| Error::io(&path, e))?;
        }
        if let Some(dir) = out_dir {
            self.save_checkpoint(dir.join("checkpoint.mpij"))?;
            self.model().save_decoder(dir.join("decoder.mpij"))?;
        }
        summary.steps = self.step;
        summary.elapsed_secs = start.elapsed().as_secs_f64();
        Ok(summary)
    }

    fn optimizers(&self) -> [(&'static str, &Adam, &ParamStore); 3] {
        [
            ("embedder", &self.opt_embedder, &self.embedder.params),
            ("restorer", &self.opt_restorer, &self.restorer.params),
            (
                "discriminator",
                &self.opt_discriminator,
                &self.discriminator.params,
            ),
        ]
    }

    /// Every network and optimizer moment plus the step counter and the
    /// configuration.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = CheckpointMeta::new(
            CheckpointKind::Full,
            &self.config.nets,
            &self.depths,
            &self.config.jpeg,
        );
        let adam_steps: serde_json::Map<String, serde_json::Value> = self
            .optimizers()
            .iter()
            .map(|(tag, opt, _)| (tag.to_string(), json!(opt.state.step)))
            .collect();
        let extra = json!({ "step": self.step, "config": self.config, "adam_steps": adam_steps });
        let mut archive = TensorArchive::new(meta_value(&meta, extra)?);
        archive.push_store(&self.embedder.params);
        archive.push_store(&self.restorer.params);
        archive.push_store(&self.discriminator.params);
        archive.push_store(&self.perceptual.params);
        for (_, opt, store) in self.optimizers() {
            for (i, (name, t)) in store.iter().enumerate() {
                archive.push(format!("adam.m.{name}"), t.shape(), opt.state.m[i].clone());
                archive.push(format!("adam.v.{name}"), t.shape(), opt.state.v[i].clone());
            }
        }
        archive.write(path.as_ref())
    }

    /// Restores a state saved by [`save_checkpoint`](Self::save_checkpoint).
    /// The file is read and verified in full before anything is built.
    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer> {
        let archive = TensorArchive::read(path.as_ref())?;
        let meta = CheckpointMeta::from_archive(&archive)?;
        if meta.kind != CheckpointKind::Full {
            return Err(Error::Architecture(
                "a decoder-only checkpoint cannot resume training".into(),
            ));
        }
        let corrupt = |what: &str| Error::CorruptCheckpoint(format!("missing {what}"));
        let config: TrainConfig = serde_json::from_value(
            archive
                .meta
                .get("config")
                .cloned()
                .ok_or_else(|| corrupt("config"))?,
        )
        .map_err(|e| Error::CorruptCheckpoint(format!("bad config: {e}")))?;
        let mut t = Trainer::build(config, false)?;
        archive.load_store(&mut t.embedder.params)?;
        archive.load_store(&mut t.restorer.params)?;
        archive.load_store(&mut t.discriminator.params)?;
        archive.load_store(&mut t.perceptual.params)?;
        t.perceptual.params.freeze();
        t.depths = meta.depths;
        t.step = archive
            .meta
            .get("step")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("step"))?;
        let steps = archive
            .meta
            .get("adam_steps")
            .cloned()
            .ok_or_else(|| corrupt("optimizer steps"))?;
        for (tag, opt, store) in [
            ("embedder", &mut t.opt_embedder, &t.embedder.params),
            ("restorer", &mut t.opt_restorer, &t.restorer.params),
            (
                "discriminator",
                &mut t.opt_discriminator,
                &t.discriminator.params,
            ),
        ] {
            opt.state.step = steps
                .get(tag)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| corrupt("optimizer steps"))?;
            for (i, (name, t)) in store.iter().enumerate() {
                for (kind, slot) in [("m", &mut opt.state.m[i]), ("v", &mut opt.state.v[i])] {
                    let saved = archive
                        .get(&format!("adam.{kind}.{name}"))
                        .ok_or_else(|| corrupt(&format!("adam.{kind}.{name}")))?;
                    if saved.data.len() != t.numel() {
                        return Err(Error::Architecture(format!(
                            "optimizer state for {name} has the wrong size"
                        )));
                    }
                    *slot = saved.data.clone();
                }
            }
        }
        Ok(t)
    }
}
