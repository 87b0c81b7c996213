//! Seeded synthetic audio-video corpus with a planted label signal, its JSON
//! Lines manifest, and the 6:1:3 train/val/test split.
//!
//! Audio is a faint base tone plus speech-like bursts whose pitch rises with
//! the label; video is a cartoon face whose mouth opens and closes with an
//! amplitude that grows with the label. At signal strength 0 both modalities
//! are independent of the label.

mod manifest;

pub use manifest::{read_manifest, split_dataset, split_sizes, write_manifest, DatasetManifest, SampleRecord, Split};

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, AudioClip, CANONICAL_RATE};
use crate::error::{Error, Result};
use crate::models::Head;
use crate::par;
use crate::rng;
use crate::tensor::Tensor;
use crate::video::{write_frames, write_landmarks, Landmarks, Point};

pub const MAX_SCORE: f64 = 63.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Binary label in {0, 1}.
    Classification,
    /// Severity score in [0, 63].
    Regression,
}

impl Task {
    pub fn head(self) -> Head {
        match self {
            Task::Classification => Head::Classification,
            Task::Regression => Head::Regression,
        }
    }

    pub fn check_label(self, label: f64) -> Result<()> {
        let ok = match self {
            Task::Classification => label == 0.0 || label == 1.0,
            Task::Regression => (0.0..=MAX_SCORE).contains(&label),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLabel(label))
        }
    }

    /// Training target for a label: regression scores are scaled into [0, 1].
    pub fn target(self, label: f64) -> f64 {
        match self {
            Task::Classification => label,
            Task::Regression => label / MAX_SCORE,
        }
    }

    /// Inverse of [`Task::target`] for model outputs.
    pub fn from_target(self, score: f64) -> f64 {
        match self {
            Task::Classification => score,
            Task::Regression => score * MAX_SCORE,
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            _ => Err(Error::config(format!("unknown task {s:?}; expected classification or regression"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub task: Task,
    /// Pitch offset of the bursts at full label strength.
    pub audio_shift_hz: f64,
    /// Extra mouth opening at full label strength.
    pub motion_amp_px: f64,
    /// Standard deviation of additive audio noise; pixel noise is half of it.
    pub noise: f64,
    pub frames: usize,
    pub frame_size: usize,
    pub frame_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 188,
            task: Task::Classification,
            audio_shift_hz: 400.0,
            motion_amp_px: 3.0,
            noise: 0.05,
            frames: 16,
            frame_size: 32,
            frame_rate: 4.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 10 {
            return Err(Error::DatasetTooSmall(self.n_samples));
        }
        for (name, v) in [
            ("audio_shift_hz", self.audio_shift_hz),
            ("motion_amp_px", self.motion_amp_px),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.frames == 0 || self.frame_size < 16 || !(self.frame_rate > 0.0) {
            return Err(Error::config("synthetic video needs frames ≥ 1, frame_size ≥ 16 and a positive rate"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.frames as f64 / self.frame_rate
    }
}

/// One generated recording before it is written to disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub label: f64,
    pub audio: AudioClip,
    pub frames: Tensor,
    pub landmarks: Vec<Landmarks>,
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:04}")
}

fn draw_label(cfg: &SynthConfig, i: usize) -> f64 {
    match cfg.task {
        Task::Classification => (i % 2) as f64,
        Task::Regression => rng::stream(cfg.seed, "label", &[i as u64]).random_range(0.0..=MAX_SCORE).round(),
    }
}

/// Deterministic in `(cfg, i)`.
pub fn generate_sample(cfg: &SynthConfig, i: usize) -> Result<SyntheticSample> {
    let label = draw_label(cfg, i);
    let strength = match cfg.task {
        Task::Classification => label,
        Task::Regression => label / MAX_SCORE,
    };
    let mut r = rng::stream(cfg.seed, "content", &[i as u64]);
    let audio = synth_audio(cfg, strength, &mut r)?;
    let (frames, landmarks) = synth_video(cfg, strength, &mut r)?;
    Ok(SyntheticSample {
        id: sample_id(i),
        label,
        audio,
        frames,
        landmarks,
    })
}

fn synth_audio<R: Rng>(cfg: &SynthConfig, strength: f64, r: &mut R) -> Result<AudioClip> {
    let sr = f64::from(CANONICAL_RATE);
    let n = (cfg.duration() * sr).round() as usize;
    let base_hz = r.random_range(180.0..220.0);
    let base_phase = r.random_range(0.0..2.0 * PI);
    let mut x: Vec<f64> = (0..n).map(|k| 0.08 * (2.0 * PI * base_hz * k as f64 / sr + base_phase).sin()).collect();

    // short bursts keep each bin's duty cycle low enough to clear a gate
    // estimated from the clip itself
    let window = 0.5;
    let mut t0 = 0.0;
    while t0 < cfg.duration() {
        let onset = t0 + r.random_range(0.0..0.3);
        let len = r.random_range(0.08..0.15);
        let hz = 900.0 + r.random_range(-60.0..60.0) + cfg.audio_shift_hz * strength;
        let start = (onset * sr) as usize;
        let count = (len * sr) as usize;
        for k in 0..count.min(n.saturating_sub(start)) {
            let env = 0.5 - 0.5 * (2.0 * PI * k as f64 / count as f64).cos();
            x[start + k] += 0.3 * env * (2.0 * PI * hz * k as f64 / sr).sin();
        }
        t0 += window;
    }

    if cfg.noise > 0.0 {
        let normal = Normal::new(0.0, cfg.noise).expect("finite positive std");
        x.iter_mut().for_each(|v| *v += normal.sample(r));
    }
    x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
    AudioClip::new(x, CANONICAL_RATE)
}

const SKIN: [f64; 3] = [0.85, 0.65, 0.55];
const BACKGROUND: [f64; 3] = [0.15, 0.15, 0.2];
const EYE: [f64; 3] = [0.1, 0.1, 0.1];
const MOUTH: [f64; 3] = [0.5, 0.1, 0.1];
const EYE_OFFSET: (f64, f64) = (5.0, -3.0);
const MOUTH_OFFSET: f64 = 5.0;

fn synth_video<R: Rng>(cfg: &SynthConfig, strength: f64, r: &mut R) -> Result<(Tensor, Vec<Landmarks>)> {
    let size = cfg.frame_size;
    let half = size as f64 / 2.0;
    let unit = size as f64 / 32.0;
    let center = Point::new(half + r.random_range(-1.5..1.5) * unit, half + r.random_range(-1.5..1.5) * unit);
    let angle = r.random_range(-10f64..10.0).to_radians();
    let scale = unit * r.random_range(0.9..1.1);
    let tint = r.random_range(0.9..1.1);
    let phase = r.random_range(0.0..2.0 * PI);
    let pixel_noise = Normal::new(0.0, (cfg.noise * 0.5).max(f64::MIN_POSITIVE)).expect("finite std");

    let (sin, cos) = angle.sin_cos();
    let to_image = |c: Point, x: f64, y: f64| Point::new(c.x + scale * (cos * x - sin * y), c.y + scale * (sin * x + cos * y));

    let plane = size * size;
    let mut data = vec![0.0; cfg.frames * 3 * plane];
    let mut landmarks = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let c = Point::new(center.x + r.random_range(-0.3..0.3), center.y + r.random_range(-0.3..0.3));
        let time = t as f64 / cfg.frame_rate;
        let opening = 1.0 + cfg.motion_amp_px * strength * (0.5 + 0.5 * (2.0 * PI * time + phase).sin());
        landmarks.push(Landmarks {
            left_eye: to_image(c, -EYE_OFFSET.0, EYE_OFFSET.1),
            right_eye: to_image(c, EYE_OFFSET.0, EYE_OFFSET.1),
            mouth: to_image(c, 0.0, MOUTH_OFFSET),
        });
        let frame = &mut data[t * 3 * plane..(t + 1) * 3 * plane];
        for y in 0..size {
            for x in 0..size {
                let mut rgb = [0.0; 3];
                for (dx, dy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                    // image → face coordinates
                    let px = x as f64 + dx - c.x;
                    let py = y as f64 + dy - c.y;
                    let fx = (cos * px + sin * py) / scale;
                    let fy = (-sin * px + cos * py) / scale;
                    let colour = face_colour(fx, fy, opening, tint);
                    for k in 0..3 {
                        rgb[k] += 0.25 * colour[k];
                    }
                }
                for k in 0..3 {
                    let v = rgb[k] + if cfg.noise > 0.0 { pixel_noise.sample(r) } else { 0.0 };
                    frame[k * plane + y * size + x] = v.clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok((Tensor::new(vec![cfg.frames, 3, size, size], data)?, landmarks))
}

fn face_colour(x: f64, y: f64, opening: f64, tint: f64) -> [f64; 3] {
    if (x / 11.0).powi(2) + (y / 13.0).powi(2) > 1.0 {
        return BACKGROUND;
    }
    let eye = |ex: f64| (x - ex).powi(2) + (y - EYE_OFFSET.1).powi(2) <= 1.6 * 1.6;
    if eye(-EYE_OFFSET.0) || eye(EYE_OFFSET.0) {
        return EYE;
    }
    if x.abs() <= 4.0 && (y - MOUTH_OFFSET).abs() <= opening / 2.0 {
        return MOUTH;
    }
    SKIN.map(|v| (v * tint).min(1.0))
}

/// Writes every sample under `out_dir/<id>/`, splits the corpus and writes
/// `out_dir/manifest.jsonl` last, atomically.
pub fn generate_dataset(cfg: &SynthConfig, out_dir: &Path, threads: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let records = par::map_indexed(cfg.n_samples, threads, |i| {
        let s = generate_sample(cfg, i)?;
        let dir = out_dir.join(&s.id);
        std::fs::create_dir_all(&dir)?;
        write_wav(dir.join("audio.wav"), &s.audio)?;
        write_frames(&dir.join("frames"), &s.frames)?;
        write_landmarks(&dir.join("landmarks.txt"), &s.landmarks)?;
        Ok(SampleRecord {
            audio: format!("{}/audio.wav", s.id).into(),
            frames: format!("{}/frames", s.id).into(),
            landmarks: format!("{}/landmarks.txt", s.id).into(),
            id: s.id,
            label: s.label,
            split: Split::Train,
        })
    })?;
    let mut manifest = DatasetManifest {
        task: cfg.task,
        frame_rate: cfg.frame_rate,
        records,
    };
    split_dataset(&mut manifest, cfg.seed)?;
    write_manifest(&out_dir.join("manifest.jsonl"), &manifest)?;
    Ok(manifest)
}
