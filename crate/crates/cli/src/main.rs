//! `mpijpeg`: embed MPIs into JPEGs, restore and render them, export
//! viewer bundles, and train or evaluate the networks.

mod commands;
mod error;
mod viewer;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser)]
#[command(
    name = "mpijpeg",
    version,
    about = "Hide multiplane images in ordinary JPEGs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed an MPI into a JPEG that looks like its reference image.
    Embed(EmbedArgs),
    /// Recover the MPI planes from an embedding JPEG.
    Restore(RestoreArgs),
    /// Render one novel view of an MPI.
    Render(RenderArgs),
    /// Write a static bundle (layers, viewer config, golden renders) for the viewer.
    ExportViewer(ExportViewerArgs),
    /// Train the embedding and restoration networks.
    Train(TrainArgs),
    /// Score a checkpoint on a set of scenes.
    Eval(EvalArgs),
    /// Apply a random colour edit and crop to an image.
    Perturb(PerturbArgs),
    /// Merge a 128-plane MPI into 32 planes.
    MergePlanes(MergeArgs),
    /// Encode an image with the baseline JPEG encoder and decode it again.
    JpegRoundtrip(RoundtripArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Subsampling {
    #[value(name = "420")]
    S420,
    #[value(name = "444")]
    S444,
}

impl From<Subsampling> for mpijpeg::jpeg::ChromaSubsampling {
    fn from(s: Subsampling) -> Self {
        match s {
            Subsampling::S420 => mpijpeg::jpeg::ChromaSubsampling::S420,
            Subsampling::S444 => mpijpeg::jpeg::ChromaSubsampling::S444,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ChannelArg {
    /// Real JPEG encode and decode.
    Exact,
    /// Differentiable JPEG simulation used during training.
    Simulated,
    /// No compression.
    Lossless,
}

#[derive(Args)]
pub struct EmbedArgs {
    /// MPI manifest.
    #[arg(long)]
    pub mpi: PathBuf,
    /// Reference image (PNG) the embedding should resemble.
    #[arg(long)]
    pub reference: PathBuf,
    /// Full training checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JPEG quality; defaults to the checkpoint's training quality.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    pub quality: Option<u8>,
    /// Chroma subsampling; defaults to the checkpoint's.
    #[arg(long)]
    pub subsampling: Option<Subsampling>,
}

#[derive(Args)]
pub struct RestoreArgs {
    /// Embedding image (JPEG or PNG).
    #[arg(long)]
    pub input: PathBuf,
    /// Full or decoder-only checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Copy intrinsics from this manifest instead of the default camera.
    #[arg(long)]
    pub intrinsics_from: Option<PathBuf>,
}

#[derive(Args)]
pub struct RenderArgs {
    /// MPI manifest.
    pub manifest: PathBuf,
    /// Output PNG.
    pub out: PathBuf,
    /// Relative pose: translation in scene units, then intrinsic XYZ Euler
    /// angles in degrees. Poses outside the training range extrapolate.
    #[arg(
        long,
        num_args = 6,
        value_names = ["TX", "TY", "TZ", "RX", "RY", "RZ"],
        allow_negative_numbers = true,
        default_values_t = [0.0; 6]
    )]
    pub pose: Vec<f64>,
}

#[derive(Args)]
pub struct ExportViewerArgs {
    /// MPI manifest.
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Translation clamp recorded for the viewer, in scene units.
    #[arg(long, default_value_t = 0.5)]
    pub translation_range: f64,
    /// Rotation clamp recorded for the viewer, in degrees.
    #[arg(long, default_value_t = 8.0)]
    pub rotation_range: f64,
}

#[derive(Args)]
pub struct SceneSource {
    /// Dataset root with one directory per scene.
    #[arg(long, conflicts_with = "synthetic")]
    pub dataset: Option<PathBuf>,
    /// Generate this many synthetic scenes instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Size of synthetic scenes, e.g. 128x72; defaults to the training resolution.
    #[arg(long, value_parser = parse_size)]
    pub scene_size: Option<(usize, usize)>,
    /// First seed of the synthetic scenes.
    #[arg(long, default_value_t = 0)]
    pub scene_seed: u64,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training configuration JSON; the desk preset when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scenes: SceneSource,
    /// Metrics, checkpoints and the final models go here.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Continue from a full checkpoint; its configuration wins.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override the configured step count.
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Full training checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub scenes: SceneSource,
    /// Receives `eval.csv` and `summary.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = ChannelArg::Exact)]
    pub channel: ChannelArg,
}

#[derive(Args)]
pub struct PerturbArgs {
    /// Image to edit (PNG or JPEG).
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Perturbation config JSON; every edit fires when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct MergeArgs {
    /// Manifest of a 128-plane MPI.
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct RoundtripArgs {
    /// Source PNG.
    #[arg(long)]
    pub input: PathBuf,
    /// Encoded JPEG.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the decoded pixels as PNG.
    #[arg(long)]
    pub decoded: Option<PathBuf>,
    #[arg(long, default_value_t = 90, value_parser = clap::value_parser!(u8).range(1..=100))]
    pub quality: u8,
    #[arg(long, value_enum, default_value_t = Subsampling::S420)]
    pub subsampling: Subsampling,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Embed(a) => commands::embed(&a),
        Command::Restore(a) => commands::restore(&a),
        Command::Render(a) => commands::render(&a),
        Command::ExportViewer(a) => viewer::export(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Perturb(a) => commands::perturb(&a),
        Command::MergePlanes(a) => commands::merge(&a),
        Command::JpegRoundtrip(a) => commands::jpeg_roundtrip(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(error::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
