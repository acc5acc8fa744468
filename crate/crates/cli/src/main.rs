//! `sprite-gan`: prepare datasets, train, evaluate, translate, and run studies.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 missing
//! resource, 4 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sprite_gan::dataset::{Pose, SplitGranularity};
use sprite_gan::ErrorKind;

#[derive(Parser)]
#[command(name = "sprite-gan", version, about = "Pose-to-pose translation of pixel-art sprites with a conditional GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slice raw sprite sheets into the canonical dataset layout.
    Prepare(PrepareArgs),
    /// Write a procedurally generated dataset in the canonical layout.
    Synth(SynthArgs),
    /// Train a generator/discriminator pair on a prepared dataset.
    Train(TrainArgs),
    /// Compute FID on the train and test splits of a trained run.
    Evaluate(EvaluateArgs),
    /// Translate source-pose PNGs with a trained generator.
    Translate(TranslateArgs),
    /// Run a study described by an experiment file.
    Study(StudyArgs),
}

#[derive(Args)]
pub struct PrepareArgs {
    /// Dataset descriptor (TOML).
    pub descriptor: PathBuf,
    /// Output directory for the canonical dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted for uniformity; preparation involves no randomness.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for the canonical dataset.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of characters to generate.
    #[arg(long, default_value_t = 200)]
    pub characters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SplitArgs {
    /// Fraction of pairs used for training.
    #[arg(long, default_value_t = 0.85)]
    pub split_ratio: f64,
    /// Seed of the train/test shuffle; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Granularity::Character)]
    pub split_granularity: Granularity,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum Granularity {
    /// A character's pairs never straddle train and test.
    Character,
    /// Pairs are assigned independently.
    Frame,
}

impl From<Granularity> for SplitGranularity {
    fn from(g: Granularity) -> Self {
        match g {
            Granularity::Character => SplitGranularity::Character,
            Granularity::Frame => SplitGranularity::Frame,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    /// Prepared dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "front", value_parser = parse_pose)]
    pub source_pose: Pose,
    #[arg(long, default_value = "right", value_parser = parse_pose)]
    pub target_pose: Pose,
    #[arg(long, default_value_t = 40_000)]
    pub steps: u64,
    /// Discriminator patch size: 2, 5, 11 or 64.
    #[arg(long, default_value_t = 2)]
    pub patch_size: usize,
    /// 4 for RGBA, 3 for RGB composited over white.
    #[arg(long, default_value_t = 4)]
    pub channels: usize,
    /// Directory name of the run under the runs root.
    #[arg(long)]
    pub run_id: String,
    /// Seeds weight initialization, dropout, and example order.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adam learning rate.
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1)]
    pub batch_size: usize,
    /// Weight of the L1 reconstruction term.
    #[arg(long, default_value_t = 100.0)]
    pub lambda_l1: f64,
    #[arg(long, default_value_t = 4_000)]
    pub checkpoint_every: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Continue from the run's latest checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Runs root; defaults to $SPRITE_RUNS_DIR, then ./runs.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run_id: String,
    /// Checkpoint step; defaults to the latest.
    #[arg(long)]
    pub step: Option<u64>,
    /// Seed of the random convolutional feature extractor.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score the ground truth itself instead of the generator (FID 0).
    #[arg(long)]
    pub oracle: bool,
    /// Rows in the rendered comparison grid.
    #[arg(long, default_value_t = 8)]
    pub grid_rows: usize,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct TranslateArgs {
    /// Run whose latest checkpoint to use.
    #[arg(long, conflicts_with = "ckpt", required_unless_present = "ckpt")]
    pub run_id: Option<String>,
    /// Explicit checkpoint directory.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Source-pose PNGs; smaller than 64x64 are padded.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Output directory; each output keeps its input's file name.
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted for uniformity; inference is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct StudyArgs {
    /// Experiment file, or the name of one under ./experiments.
    pub spec: String,
    /// Overrides the training and split seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the number of training steps per model.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    s.parse().map_err(|e: sprite_gan::Error| e.to_string())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Missing => 3,
        ErrorKind::Runtime => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Translate(a) => commands::translate(a),
        Command::Study(a) => commands::study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
