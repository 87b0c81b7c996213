use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use avfusion::datagen::{generate_dataset, Split, Task};
use avfusion::evaluation::{evaluate_split, read_metrics, render_table, Scorer};
use avfusion::models::{AudioNetConfig, Network, VideoModel};
use avfusion::pipeline::{load_dataset, preprocess_dataset};
use avfusion::training::{default_alpha_grid, grid_search_alpha_beta, pretrain_audio, train_fusion, train_video, AudioTeacher, FusionLossConfig};
use avfusion::ModelParams;
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::Stage;

/// Contents of `run.json`: what was trained into a run directory.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub task: Task,
    pub seed: u64,
    pub clip_len: usize,
    /// Weights of the training loss.
    pub fusion: FusionLossConfig,
    /// Weights of the fused evaluation score.
    pub scoring: FusionLossConfig,
    pub audio: Option<AudioNetConfig>,
    pub audio_sha256: Option<String>,
    pub video: Option<VideoModel>,
    pub video_stage: Option<String>,
}

const AUDIO_CKPT: &str = "audio.avck";
const VIDEO_CKPT: &str = "video.avck";

impl RunInfo {
    fn path(run: &Path) -> PathBuf {
        run.join("run.json")
    }

    fn load(run: &Path) -> Result<Option<Self>> {
        let p = Self::path(run);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p)?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
    }

    fn save(&self, run: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(Self::path(run), text)?;
        Ok(())
    }
}

pub fn synth(settings: &Settings, out: &Path) -> Result<()> {
    let manifest = generate_dataset(&settings.synth, out, settings.threads)?;
    eprintln!(
        "wrote {} samples to {} (train {}, val {}, test {})",
        manifest.records.len(),
        out.display(),
        manifest.count(Split::Train),
        manifest.count(Split::Val),
        manifest.count(Split::Test)
    );
    Ok(())
}

pub fn preprocess(settings: &Settings, manifest: &Path, out: &Path) -> Result<()> {
    let records = preprocess_dataset(manifest, out, &settings.preprocess, settings.threads)?;
    eprintln!("processed {} recordings into {}", records.len(), out.display());
    Ok(())
}

pub fn train(settings: &Settings, data_path: &Path, run: &Path, stage: Stage, grid_search: bool) -> Result<()> {
    let data = load_dataset(data_path)?;
    std::fs::create_dir_all(run)?;
    let schedule = &settings.schedule;
    let mut info = RunInfo::load(run)?.unwrap_or(RunInfo {
        task: data.task,
        seed: schedule.seed,
        clip_len: schedule.clip_len,
        fusion: settings.fusion,
        scoring: settings.fusion,
        audio: None,
        audio_sha256: None,
        video: None,
        video_stage: None,
    });
    if info.task != data.task {
        bail!("run directory holds a {:?} model but the data is {:?}", info.task, data.task);
    }
    info.seed = schedule.seed;
    info.clip_len = schedule.clip_len;

    if matches!(stage, Stage::Audio | Stage::All) {
        let net = settings.audio_net(data.task);
        let out = pretrain_audio(&data, &net, schedule)?;
        out.params.save(run.join(AUDIO_CKPT))?;
        out.history.write_csv(&run.join("audio_history.csv"))?;
        eprintln!("audio: best epoch {} of {}, checkpoint {}", out.best_epoch, schedule.audio_epochs, out.params.sha256());
        info.audio_sha256 = Some(out.params.sha256());
        info.audio = Some(net);
    }

    if matches!(stage, Stage::Fusion | Stage::All) {
        let (Some(anet), Some(sha)) = (&info.audio, &info.audio_sha256) else {
            bail!("no audio model in {}; run the audio stage first", run.display());
        };
        let audio = ModelParams::load(run.join(AUDIO_CKPT))?;
        if &audio.sha256() != sha {
            bail!("audio checkpoint does not match the hash recorded in run.json");
        }
        let vnet = settings.video_net(data.task);
        let teacher = AudioTeacher {
            net: anet,
            params: &audio,
            fusion: settings.fusion,
        };
        let out = train_fusion(&data, &teacher, &vnet, schedule)?;
        let after = audio.sha256();
        eprintln!("fusion: best epoch {} of {}, audio checkpoint before {sha} after {after}", out.best_epoch, schedule.fusion_epochs);
        out.params.save(run.join(VIDEO_CKPT))?;
        out.history.write_csv(&run.join("video_history.csv"))?;
        info.fusion = settings.fusion;
        info.scoring = settings.fusion;
        if grid_search {
            info.scoring = grid_search_alpha_beta(&data, (anet, &audio), (&vnet, &out.params), &default_alpha_grid(), schedule.clip_len)?;
            eprintln!("grid search: alpha {} beta {}", info.scoring.alpha, info.scoring.beta);
        }
        info.video = Some(vnet);
        info.video_stage = Some("fusion".into());
    }

    if stage == Stage::Video {
        let vnet = settings.video_net(data.task);
        let out = train_video(&data, &vnet, schedule)?;
        eprintln!("video: best epoch {} of {}", out.best_epoch, schedule.fusion_epochs);
        out.params.save(run.join(VIDEO_CKPT))?;
        out.history.write_csv(&run.join("video_history.csv"))?;
        info.video = Some(vnet);
        info.video_stage = Some("video".into());
    }
    info.save(run)
}

pub fn evaluate(settings: &Settings, data_path: &Path, run: &Path, out: &Path, split: Split, threshold: f64) -> Result<()> {
    let data = load_dataset(data_path)?;
    let Some(info) = RunInfo::load(run)? else {
        bail!("{} has no run.json; train a model first", run.display());
    };
    if info.task != data.task {
        bail!("run directory holds a {:?} model but the data is {:?}", info.task, data.task);
    }
    let Some(vnet) = &info.video else {
        bail!("no video model in {}", run.display());
    };
    let vparams = ModelParams::load(run.join(VIDEO_CKPT))?;
    vnet.validate(&vparams)?;
    let audio = match &info.audio {
        Some(anet) => {
            let p = ModelParams::load(run.join(AUDIO_CKPT))?;
            Network::validate(anet, &p)?;
            Some((anet, p))
        }
        None => None,
    };
    let scorer = Scorer {
        audio: audio.as_ref().map(|(n, p)| (*n, p)),
        video: (vnet, &vparams),
        fusion: info.scoring,
        clip_len: info.clip_len,
        frame_rate: data.frame_rate,
        segment_seconds: data.segment_seconds,
    };
    let report = evaluate_split(&data, split, &scorer, threshold, settings.threads)?;
    report.write(out)?;
    let rows: Vec<_> = report.models.iter().map(|m| (m.model.clone(), m.clone())).collect();
    print!("{}", render_table(&rows));
    Ok(())
}

pub fn report(paths: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for p in paths {
        let label = p
            .parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        for m in read_metrics(p)? {
            rows.push((format!("{label}/{}", m.model), m));
        }
    }
    print!("{}", render_table(&rows));
    Ok(())
}
