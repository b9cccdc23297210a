//! `evstack`: event stacking, video schedules, simulation, evaluation,
//! dataset preparation and toy cGAN training from the command line.

mod commands;
mod error;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "evstack", version, about = "Event-camera stacking and reconstruction toolkit")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build one SBT or SBE stack.
    Stack(StackArgs),
    /// Stack a sliding-window schedule into a frame sequence.
    Video(VideoArgs),
    /// Render a moving scene into events, APS and ground-truth frames.
    Simulate(SimulateArgs),
    /// Score reconstructions against ground truth.
    Evaluate(EvaluateArgs),
    /// Filter frames and events and write training pairs.
    Prep(PrepArgs),
    /// Train the toy cGAN.
    TrainToy(TrainArgs),
    /// Reconstruct images from stacks with a trained checkpoint.
    Infer(InferArgs),
}

#[derive(Args, Debug, Clone)]
pub struct StreamArgs {
    /// Event file, text or binary.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ModeArgs {
    /// sbt or sbe.
    #[arg(long)]
    pub mode: Option<String>,
    /// Frames per stack.
    #[arg(long)]
    pub n: Option<usize>,
    /// SBE events per frame.
    #[arg(long)]
    pub events_per_frame: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StackArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// SBT window start (default: first event).
    #[arg(long)]
    pub t_start_us: Option<i64>,
    /// SBT window end, exclusive (default: last event + 1).
    #[arg(long)]
    pub t_end_us: Option<i64>,
    /// SBE index of the first event.
    #[arg(long)]
    pub start_index: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VideoArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    /// SBT window length.
    #[arg(long)]
    pub window_us: Option<i64>,
    /// Shift between consecutive windows; the frame rate is 1e6 / shift.
    #[arg(long)]
    pub shift_us: Option<i64>,
    /// none, blobs or ppm.
    #[arg(long)]
    pub emit: Option<String>,
    /// Reconstruct each window with this checkpoint (writes PGM frames).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// checkerboard, gradient or star.
    #[arg(long)]
    pub pattern: Option<String>,
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long)]
    pub arms: Option<usize>,
    /// static, translate or rotate.
    #[arg(long)]
    pub motion: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub vx: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub vy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub rpm: Option<f64>,
    #[arg(long)]
    pub low: Option<f64>,
    #[arg(long)]
    pub high: Option<f64>,
    #[arg(long)]
    pub radiance_scale: Option<f64>,
    #[arg(long)]
    pub duration_us: Option<i64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub contrast_threshold: Option<f64>,
    #[arg(long)]
    pub sampling_step_us: Option<i64>,
    #[arg(long)]
    pub frame_interval_us: Option<i64>,
    /// text or binary.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Defaults to `<gt-dir>/index.txt`.
    #[arg(long)]
    pub gt_index: Option<PathBuf>,
    #[arg(long)]
    pub recon_dir: Option<PathBuf>,
    /// Defaults to `<recon-dir>/index.txt`.
    #[arg(long)]
    pub recon_index: Option<PathBuf>,
    #[arg(long)]
    pub brisque_model: Option<PathBuf>,
    /// Report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    #[command(flatten)]
    pub stream: StreamArgs,
    #[command(flatten)]
    pub mode: ModeArgs,
    #[arg(long)]
    pub aps_dir: Option<PathBuf>,
    /// Defaults to `<aps-dir>/index.txt`.
    #[arg(long)]
    pub aps_index: Option<PathBuf>,
    /// Frames scoring above this are rejected as blurred; `off` disables.
    #[arg(long, allow_hyphen_values = true)]
    pub blur_threshold: Option<String>,
    #[arg(long)]
    pub brisque_model: Option<PathBuf>,
    #[arg(long)]
    pub saturation_low: Option<u8>,
    #[arg(long)]
    pub saturation_high: Option<u8>,
    /// Remove events at saturated pixels (true or false).
    #[arg(long)]
    pub hdr_refine: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory written by `prep`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Generate this many simulator scenes instead of reading pairs.
    #[arg(long)]
    pub synthetic_scenes: Option<usize>,
    /// Frames per stack for synthetic data.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub holdout_fraction: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory written by `prep`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// A single normalized-stack blob.
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut settings = settings::Settings::load(cli.config.as_deref())?;
    let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers: usize = settings.value("workers", cli.workers, default_workers)?;
    if workers == 0 {
        return Err(CliError::usage("--workers must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::new("ThreadPool", e.to_string()))?;
    // The worker count never changes results, so it stays out of the manifest.
    settings.forget("workers");
    pool.install(|| match cli.command {
        Command::Stack(a) => commands::stack(a, settings),
        Command::Video(a) => commands::video(a, settings, workers),
        Command::Simulate(a) => commands::simulate(a, settings),
        Command::Evaluate(a) => commands::evaluate(a, settings),
        Command::Prep(a) => commands::prep(a, settings),
        Command::TrainToy(a) => commands::train_toy(a, settings),
        Command::Infer(a) => commands::infer(a, settings),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
