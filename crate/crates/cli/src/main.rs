mod config;
mod run;

use std::path::PathBuf;

use anyhow::Result;
use avfusion::datagen::{Split, Task};
use clap::{Parser, Subcommand, ValueEnum};

use config::{FileConfig, Overrides, Profile, Settings, VideoArch};

#[derive(Parser)]
#[command(name = "avfusion", version, about = "Audio-visual screening models: data, training and evaluation")]
struct Cli {
    /// TOML config file (`fusion.alpha = 0.6`, `schedule.audio.epochs = 30`, ...).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Pre-train and freeze the audio model.
    Audio,
    /// Fine-tune the video model with the fused loss against the frozen audio model.
    Fusion,
    /// Train the video model on its own loss.
    Video,
    /// Audio followed by fusion.
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic audio-visual corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_parser = parse_task)]
        task: Option<Task>,
        /// Multiplier on the planted audio and video signal (0 removes it).
        #[arg(long)]
        signal: Option<f64>,
    },
    /// Denoise, segment and align a corpus into model inputs.
    Preprocess {
        /// Manifest written by `synth` (or any manifest of the same format).
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        size: Option<usize>,
        /// Write a PNG log-mel image per audio segment.
        #[arg(long)]
        emit_spectrograms: bool,
    },
    /// Train one stage into a run directory.
    Train {
        /// Processed manifest written by `preprocess`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        #[arg(long, value_enum)]
        model: Option<VideoArch>,
        /// After fusion training, pick the scoring weights on the validation split.
        #[arg(long)]
        grid_search: bool,
    },
    /// Score a split with the models of a run directory.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Print a comparison table from one or more metrics.csv files.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: avfusion::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: avfusion::Error| e.to_string())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut settings = Settings::resolve(
        file,
        Overrides {
            profile: cli.profile,
            seed: cli.seed,
            threads: cli.threads,
        },
    )?;
    match cli.command {
        Command::Synth { out, n, task, signal } => {
            if let Some(n) = n {
                settings.synth.n_samples = n;
            }
            if let Some(t) = task {
                settings.synth.task = t;
            }
            if let Some(s) = signal {
                anyhow::ensure!(s >= 0.0 && s.is_finite(), "signal must be a finite non-negative multiplier");
                settings.synth.audio_shift_hz *= s;
                settings.synth.motion_amp_px *= s;
            }
            run::synth(&settings, &out)
        }
        Command::Preprocess {
            manifest,
            out,
            size,
            emit_spectrograms,
        } => {
            if let Some(s) = size {
                settings.preprocess.out_size = s;
            }
            settings.preprocess.emit_spectrograms = emit_spectrograms;
            run::preprocess(&settings, &manifest, &out)
        }
        Command::Train {
            data,
            run,
            stage,
            model,
            grid_search,
        } => {
            if let Some(m) = model {
                settings.video_arch = m;
            }
            run::train(&settings, &data, &run, stage, grid_search)
        }
        Command::Evaluate {
            data,
            run,
            out,
            split,
            threshold,
        } => run::evaluate(&settings, &data, &run, &out, split, threshold),
        Command::Report { metrics } => run::report(&metrics),
    }
}
