//! Run configuration: a TOML file of optional keys layered over a profile.
//!
//! ```toml
//! profile = "desk"
//! seed = 3
//! batch_size = 8
//! fusion.alpha = 0.6
//! fusion.beta = 0.4
//! schedule.audio.epochs = 30
//! schedule.fusion.lr = 1e-3
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use avfusion::datagen::{SynthConfig, Task};
use avfusion::models::{AudioNetConfig, BaselineConfig, VideoModel, VideoNetConfig};
use avfusion::pipeline::PreprocessConfig;
use avfusion::training::{FusionLossConfig, TrainSchedule};
use clap::ValueEnum;
use serde::Deserialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Narrow networks, 32×32 frames, 8-frame clips, 30 epochs per stage.
    Desk,
    /// Full-width networks, 224×224 frames, 64-frame clips, 100/150 epochs.
    #[default]
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum VideoArch {
    CovAttention,
    Lstm,
    Cnn3d,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage {
    epochs: Option<usize>,
    lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Schedule {
    #[serde(default)]
    audio: Stage,
    #[serde(default)]
    fusion: Stage,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Fusion {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Augment {
    flip_prob: Option<f64>,
    brightness: Option<f64>,
    contrast: Option<f64>,
    saturation: Option<f64>,
    hue: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Synth {
    n_samples: Option<usize>,
    task: Option<Task>,
    audio_shift_hz: Option<f64>,
    motion_amp_px: Option<f64>,
    noise: Option<f64>,
    frames: Option<usize>,
    frame_size: Option<usize>,
    frame_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Preprocess {
    out_size: Option<usize>,
    segment_seconds: Option<f64>,
    n_std: Option<f64>,
}

/// Keys accepted in a config file. Everything is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    profile: Option<Profile>,
    seed: Option<u64>,
    threads: Option<usize>,
    batch_size: Option<usize>,
    clip_len: Option<usize>,
    video_model: Option<VideoArch>,
    #[serde(default)]
    fusion: Fusion,
    #[serde(default)]
    schedule: Schedule,
    #[serde(default)]
    augment: Augment,
    #[serde(default)]
    synth: Synth,
    #[serde(default)]
    preprocess: Preprocess,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Fully resolved settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub profile: Profile,
    pub threads: usize,
    pub schedule: TrainSchedule,
    pub fusion: FusionLossConfig,
    pub video_arch: VideoArch,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl Settings {
    pub fn resolve(file: FileConfig, cli: Overrides) -> Result<Self> {
        let profile = cli.profile.or(file.profile).unwrap_or_default();
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        let mut schedule = match profile {
            Profile::Desk => TrainSchedule::desk(seed),
            Profile::Full => TrainSchedule {
                seed,
                ..TrainSchedule::default()
            },
        };
        set!(schedule.batch_size, file.batch_size);
        set!(schedule.clip_len, file.clip_len);
        set!(schedule.audio_epochs, file.schedule.audio.epochs);
        set!(schedule.audio_lr, file.schedule.audio.lr);
        set!(schedule.fusion_epochs, file.schedule.fusion.epochs);
        set!(schedule.fusion_lr, file.schedule.fusion.lr);
        set!(schedule.augment.flip_prob, file.augment.flip_prob);
        set!(schedule.augment.brightness, file.augment.brightness);
        set!(schedule.augment.contrast, file.augment.contrast);
        set!(schedule.augment.saturation, file.augment.saturation);
        set!(schedule.augment.hue, file.augment.hue);
        schedule.validate()?;

        let fusion = match (file.fusion.alpha, file.fusion.beta) {
            (None, None) => FusionLossConfig::default(),
            (Some(a), None) => FusionLossConfig::new(a, 1.0 - a)?,
            (None, Some(b)) => FusionLossConfig::new(1.0 - b, b)?,
            (Some(a), Some(b)) => FusionLossConfig::new(a, b)?,
        };

        let mut synth = SynthConfig {
            seed,
            ..SynthConfig::default()
        };
        set!(synth.n_samples, file.synth.n_samples);
        set!(synth.task, file.synth.task);
        set!(synth.audio_shift_hz, file.synth.audio_shift_hz);
        set!(synth.motion_amp_px, file.synth.motion_amp_px);
        set!(synth.noise, file.synth.noise);
        set!(synth.frames, file.synth.frames);
        set!(synth.frame_size, file.synth.frame_size);
        set!(synth.frame_rate, file.synth.frame_rate);

        let mut preprocess = PreprocessConfig::default();
        if profile == Profile::Desk {
            preprocess.out_size = 32;
        }
        set!(preprocess.out_size, file.preprocess.out_size);
        set!(preprocess.segment_seconds, file.preprocess.segment_seconds);
        set!(preprocess.gate.n_std, file.preprocess.n_std);

        let threads = cli
            .threads
            .or(file.threads)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if threads == 0 {
            bail!("threads must be at least 1");
        }
        Ok(Settings {
            profile,
            threads,
            schedule,
            fusion,
            video_arch: file.video_model.unwrap_or(VideoArch::CovAttention),
            synth,
            preprocess,
        })
    }

    pub fn audio_net(&self, task: Task) -> AudioNetConfig {
        match self.profile {
            Profile::Desk => AudioNetConfig::desk(task.head()),
            Profile::Full => AudioNetConfig::new(task.head()),
        }
    }

    pub fn video_net(&self, task: Task) -> VideoModel {
        let head = task.head();
        match (self.video_arch, self.profile) {
            (VideoArch::CovAttention, Profile::Desk) => VideoModel::CovAttention(VideoNetConfig::desk(head)),
            (VideoArch::CovAttention, Profile::Full) => VideoModel::CovAttention(VideoNetConfig::new(head)),
            (VideoArch::Lstm, _) => VideoModel::Baseline(BaselineConfig::lstm(head)),
            (VideoArch::Cnn3d, _) => VideoModel::Baseline(BaselineConfig::plain_3dcnn(head)),
        }
    }
}
