use std::path::Path;

use mpijpeg::jpeg::{jpeg_decode, jpeg_encode, JpegConfig};
use mpijpeg::metrics::{eval_poses, eval_scene, psnr, Scores};
use mpijpeg::mpi::{merge_planes, render_novel_view, save_mpi, MpiManifest};
use mpijpeg::perturb::{PerturbConfig, Perturbation};
use mpijpeg::train::{
    ingest_dataset, load_scene, synthetic_scenes, Channel, Model, ModelCodec, TrainConfig,
    TrainScene, Trainer,
};
use mpijpeg::{CameraModel, Image, MpiStack, RelativePose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::{
    ChannelArg, EmbedArgs, EvalArgs, MergeArgs, PerturbArgs, RenderArgs, RestoreArgs,
    RoundtripArgs, SceneSource, TrainArgs,
};

/// Reads a PNG, or a JPEG when the extension says so.
pub fn load_image(path: &Path) -> CliResult<Image> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("jpg" | "jpeg") => {
            let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
            Ok(jpeg_decode(&bytes)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?)
        }
        _ => Ok(Image::load_png(path)?),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn print_json(value: &impl Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Translation then intrinsic XYZ Euler angles in degrees.
pub fn pose_from(values: &[f64]) -> CliResult<RelativePose> {
    let [tx, ty, tz, rx, ry, rz] = <[f64; 6]>::try_from(values).map_err(|_| {
        CliError::Validation(format!("a pose needs 6 values, got {}", values.len()))
    })?;
    let pose = RelativePose::from_euler_deg([tx, ty, tz], rx, ry, rz);
    pose.validate()?;
    Ok(pose)
}

pub fn embed(a: &EmbedArgs) -> CliResult<()> {
    let model = Model::load(&a.checkpoint)?;
    let (mpi, _) = MpiManifest::load(&a.mpi)?;
    let reference = load_image(&a.reference)?.take_channels(3)?;
    let mut jpeg = model.jpeg;
    if let Some(q) = a.quality {
        jpeg.quality = q;
    }
    if let Some(s) = a.subsampling {
        jpeg.chroma_subsampling = s.into();
    }
    jpeg.validate()?;
    let embedding = model.embed(&mpi, &reference)?;
    write_bytes(&a.out, &jpeg_encode(&embedding, &jpeg)?)?;
    log::info!(
        "embedded {} planes into {} ({}x{}, quality {})",
        mpi.num_planes(),
        a.out.display(),
        embedding.width(),
        embedding.height(),
        jpeg.quality
    );
    Ok(())
}

pub fn restore(a: &RestoreArgs) -> CliResult<()> {
    let image = load_image(&a.input)?;
    let model = Model::load(&a.checkpoint)?;
    let mpi = model.restore(&image)?;
    let cam = match &a.intrinsics_from {
        Some(path) => {
            let m = MpiManifest::read(path)?;
            m.intrinsics.validate(mpi.width(), mpi.height())?;
            m.intrinsics
        }
        None => CameraModel::default_for(mpi.width(), mpi.height()),
    };
    let path = save_mpi(&a.out_dir, &mpi, &cam)?;
    println!("{}", path.display());
    Ok(())
}

pub fn render_view(manifest: &Path, pose: &RelativePose) -> CliResult<Image> {
    let (mpi, cam) = MpiManifest::load(manifest)?;
    Ok(render_novel_view(&mpi, pose, &cam)?)
}

pub fn render(a: &RenderArgs) -> CliResult<()> {
    let view = render_view(&a.manifest, &pose_from(&a.pose)?)?;
    view.save_png(&a.out)?;
    Ok(())
}

fn load_scenes(
    src: &SceneSource,
    fallback_dataset: Option<&Path>,
    default_size: (usize, usize),
    planes: usize,
) -> CliResult<Vec<TrainScene>> {
    if let Some(n) = src.synthetic {
        if n == 0 {
            return Err(CliError::Validation(
                "--synthetic needs at least one scene".into(),
            ));
        }
        let (w, h) = src.scene_size.unwrap_or(default_size);
        if w == 0 || h == 0 {
            return Err(CliError::Validation(format!("empty scene size {w}x{h}")));
        }
        return Ok(synthetic_scenes(src.scene_seed, n, w, h, planes));
    }
    let root =
        src.dataset.as_deref().or(fallback_dataset).ok_or_else(|| {
            CliError::Validation("no scenes: pass --dataset or --synthetic".into())
        })?;
    let ingest = ingest_dataset(root)?;
    for w in &ingest.warnings {
        log::warn!("{w}");
    }
    let scenes = ingest
        .records
        .iter()
        .map(load_scene)
        .collect::<mpijpeg::Result<Vec<_>>>()?;
    if let Some(s) = scenes.iter().find(|s| s.mpi.num_planes() != planes) {
        return Err(CliError::Validation(format!(
            "scene {} has {} planes, the networks expect {planes}",
            s.id,
            s.mpi.num_planes()
        )));
    }
    Ok(scenes)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let mut trainer = match &a.resume {
        Some(path) => Trainer::load_checkpoint(path)?,
        None => {
            let config = match &a.config {
                Some(path) => TrainConfig::load(path)?,
                None => TrainConfig::desk(),
            };
            Trainer::new(config)?
        }
    };
    if let Some(steps) = a.steps {
        trainer.set_steps(steps);
    }
    let config = trainer.config().clone();
    let scenes = load_scenes(
        &a.scenes,
        config.dataset.as_deref(),
        (config.width(), config.height()),
        config.nets.num_planes,
    )?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    config.save(a.out_dir.join("config.json"))?;
    let summary = trainer.run(&scenes, Some(&a.out_dir))?;
    print_json(&serde_json::json!({
        "steps": summary.steps,
        "stopped_early": summary.stopped_early,
        "out_of_time": summary.out_of_time,
        "elapsed_secs": summary.elapsed_secs,
        "probes": summary.probes,
        "last": summary.last,
    }))
}

#[derive(Serialize)]
struct EvalRow<'a> {
    scene: &'a str,
    embed_psnr: f64,
    embed_ssim: f64,
    render_psnr: f64,
    render_ssim: f64,
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let model = Model::load(&a.checkpoint)?;
    let scenes = load_scenes(&a.scenes, None, (128, 72), model.depths.len())?;
    let (channel, channel_name) = match a.channel {
        ChannelArg::Exact => (Channel::Exact(model.jpeg), "exact"),
        ChannelArg::Simulated => (Channel::Simulated(model.jpeg), "simulated"),
        ChannelArg::Lossless => (Channel::Lossless, "lossless"),
    };
    let codec = ModelCodec {
        model: &model,
        channel,
    };
    let poses = eval_poses();
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let mut csv = csv::Writer::from_path(a.out_dir.join("eval.csv"))?;
    let (mut embeddings, mut renders) = (Vec::new(), Vec::new());
    for s in &scenes {
        let r = eval_scene(&codec, &s.mpi, &s.reference, &s.camera, &poses)?;
        csv.serialize(EvalRow {
            scene: &s.id,
            embed_psnr: r.embedding.psnr,
            embed_ssim: r.embedding.ssim,
            render_psnr: r.render.psnr,
            render_ssim: r.render.ssim,
        })?;
        embeddings.push(r.embedding);
        renders.push(r.render);
    }
    csv.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    let summary = serde_json::json!({
        "scenes": scenes.len(),
        "channel": channel_name,
        "jpeg": model.jpeg,
        "poses": poses.iter().map(|p| p.translation).collect::<Vec<_>>(),
        "embedding": Scores::mean(&embeddings),
        "render": Scores::mean(&renders),
    });
    let path = a.out_dir.join("summary.json");
    write_bytes(&path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    print_json(&summary)
}

pub fn perturb(a: &PerturbArgs) -> CliResult<()> {
    let cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<PerturbConfig>(&text)?
        }
        None => PerturbConfig {
            probability: 1.0,
            ..PerturbConfig::default()
        },
    };
    cfg.validate()?;
    let image = load_image(&a.input)?.take_channels(3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let edit = Perturbation::sample(&cfg, 1, image.width(), image.height(), &mut rng)?;
    let out = Image::from_tensor(&edit.apply(&image.to_tensor::<f32>())?, 0)?;
    out.save_png(&a.out)?;
    print_json(&serde_json::json!({ "jitter": edit.jitter[0], "crop": edit.crop }))
}

pub fn merge(a: &MergeArgs) -> CliResult<()> {
    let (mpi, cam) = MpiManifest::load(&a.manifest)?;
    let merged: MpiStack = merge_planes(&mpi)?;
    let path = save_mpi(&a.out_dir, &merged, &cam)?;
    println!("{}", path.display());
    Ok(())
}

pub fn jpeg_roundtrip(a: &RoundtripArgs) -> CliResult<()> {
    let image = Image::load_png(&a.input)?;
    let image = if image.channels() == 4 {
        image.take_channels(3)?
    } else {
        image
    };
    let cfg = JpegConfig::new(a.quality, a.subsampling.into());
    let bytes = jpeg_encode(&image, &cfg)?;
    write_bytes(&a.out, &bytes)?;
    let decoded = jpeg_decode(&bytes)?;
    if let Some(path) = &a.decoded {
        decoded.save_png(path)?;
    }
    print_json(&serde_json::json!({
        "bytes": bytes.len(),
        "width": decoded.width(),
        "height": decoded.height(),
        "psnr": psnr(&decoded, &image)?,
    }))
}
