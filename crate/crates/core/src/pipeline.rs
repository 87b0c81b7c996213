//! Turns a raw corpus into model-ready tensors: denoised, segmented log-mel
//! audio and landmark-aligned face frames, one container file per recording.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, log_mel, segment_audio, spectral_gate_denoise, stft, GateConfig, NoiseStats, StftConfig};
use crate::datagen::{read_manifest, SampleRecord, Split, Task};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{ModelParams, Tensor};
use crate::video::{apply_alignment, compute_alignment, load_frames, window};

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub gate: GateConfig,
    pub segment_seconds: f64,
    pub n_mels: usize,
    pub out_size: usize,
    pub emit_spectrograms: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            gate: GateConfig::default(),
            segment_seconds: 2.0,
            n_mels: 64,
            out_size: 224,
            emit_spectrograms: false,
        }
    }
}

/// Model inputs for one recording: `audio` is `[S, 1, n_mels, frames]` (one
/// row per segment) and `video` is `[T, 3, out_size, out_size]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessedSample {
    pub id: String,
    pub label: f64,
    pub split: Split,
    pub audio: Tensor,
    pub video: Tensor,
}

impl ProcessedSample {
    pub fn segments(&self) -> usize {
        self.audio.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.video.shape()[0]
    }

    /// Segment `k` as `[1, n_mels, frames]`.
    pub fn segment(&self, k: usize) -> Tensor {
        window(&self.audio, k, 1).expect("segment index in range").reshape(self.audio.shape()[1..].to_vec()).expect("same size")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessedRecord {
    pub id: String,
    pub features: PathBuf,
    pub label: f64,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProcessedHeader {
    task: Task,
    frame_rate: f64,
    segment_seconds: f64,
    samples: usize,
}

/// All preprocessed recordings of a corpus, in manifest order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub frame_rate: f64,
    pub segment_seconds: f64,
    pub samples: Vec<ProcessedSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&ProcessedSample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn require(&self, split: Split) -> Result<Vec<&ProcessedSample>> {
        let v = self.split(split);
        if v.is_empty() {
            return Err(Error::EmptySplit(split.as_str()));
        }
        Ok(v)
    }
}

pub fn preprocess_audio(path: &Path, cfg: &PreprocessConfig) -> Result<(Tensor, Vec<Tensor>)> {
    let clip = load_wav(path)?;
    let stats = NoiseStats::estimate(&clip, &cfg.gate)?;
    let clean = spectral_gate_denoise(&clip, Some(&stats), &cfg.gate)?;
    let segments = segment_audio(&clean, cfg.segment_seconds);
    if segments.is_empty() {
        return Err(Error::ClipTooShort {
            len: clean.samples.len(),
            needed: (cfg.segment_seconds * f64::from(clean.sample_rate)).round() as usize,
        });
    }
    let mels = segments
        .iter()
        .map(|s| log_mel(&stft(s, StftConfig::default())?, cfg.n_mels))
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::stack(&mels)?, mels))
}

/// Aligns every frame with its own landmarks.
pub fn preprocess_video(frames_dir: &Path, landmarks: &Path, frame_rate: f64, out_size: usize) -> Result<Tensor> {
    let seq = load_frames(frames_dir, landmarks, frame_rate)?;
    let mut aligned = Vec::with_capacity(seq.len());
    for (t, lm) in seq.landmarks.iter().enumerate() {
        let transform = compute_alignment(lm, out_size)?;
        let frame = window(&seq.frames, t, 1)?;
        let warped = apply_alignment(&frame, &transform, (out_size, out_size))?;
        aligned.push(warped.reshape(vec![3, out_size, out_size])?);
    }
    Tensor::stack(&aligned)
}

fn preprocess_record(
    record: &SampleRecord,
    root: &Path,
    frame_rate: f64,
    cfg: &PreprocessConfig,
    out_dir: &Path,
) -> Result<ProcessedRecord> {
    let (audio, mels) = preprocess_audio(&root.join(&record.audio), cfg)?;
    let video = preprocess_video(&root.join(&record.frames), &root.join(&record.landmarks), frame_rate, cfg.out_size)?;
    let mut container = ModelParams::new();
    container.insert("audio", audio)?;
    container.insert("video", video)?;
    let features = PathBuf::from(format!("{}.avck", record.id));
    container.save(out_dir.join(&features))?;
    if cfg.emit_spectrograms {
        let dir = out_dir.join("spectrograms");
        std::fs::create_dir_all(&dir)?;
        for (k, m) in mels.iter().enumerate() {
            let path = dir.join(format!("{}_seg{k}.png", record.id));
            spectrogram_image(m).save(&path).map_err(|source| Error::Image { path, source })?;
        }
    }
    Ok(ProcessedRecord {
        id: record.id.clone(),
        features,
        label: record.label,
        split: record.split,
    })
}

/// Log-mel `[1, M, F]` as an 8-bit image, low frequencies at the bottom.
pub fn spectrogram_image(mel: &Tensor) -> GrayImage {
    let (m, f) = (mel.shape()[1], mel.shape()[2]);
    let d = mel.data();
    let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(f as u32, m as u32, |x, y| {
        let v = d[(m - 1 - y as usize) * f + x as usize];
        Luma([((v - lo) / span * 255.0).round() as u8])
    })
}

/// Processes every record of the manifest at `manifest_path` into `out_dir`
/// and writes `out_dir/manifest.jsonl`. Failures carry the sample id; the
/// lowest-index failure is reported.
pub fn preprocess_dataset(manifest_path: &Path, out_dir: &Path, cfg: &PreprocessConfig, threads: usize) -> Result<Vec<ProcessedRecord>> {
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;
    let records = par::map_indexed(manifest.records.len(), threads, |i| {
        let r = &manifest.records[i];
        preprocess_record(r, root, manifest.frame_rate, cfg, out_dir).map_err(|e| e.in_sample(&r.id))
    })?;
    let header = ProcessedHeader {
        task: manifest.task,
        frame_rate: manifest.frame_rate,
        segment_seconds: cfg.segment_seconds,
        samples: records.len(),
    };
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for r in &records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let path = out_dir.join("manifest.jsonl");
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(tmp, path)?;
    Ok(records)
}

/// Loads a processed manifest and every feature container it references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(manifest_path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: manifest_path.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((i, first)) = lines.next() else {
        return Err(Error::Empty("processed manifest"));
    };
    let header: ProcessedHeader = serde_json::from_str(first).map_err(|e| parse_err(i + 1, e.to_string()))?;
    let mut samples = Vec::new();
    for (i, line) in lines {
        let r: ProcessedRecord = serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        header.task.check_label(r.label).map_err(|e| e.in_sample(&r.id))?;
        let c = ModelParams::load(root.join(&r.features)).map_err(|e| e.in_sample(&r.id))?;
        samples.push(ProcessedSample {
            audio: c.get("audio").map_err(|e| e.in_sample(&r.id))?.clone(),
            video: c.get("video").map_err(|e| e.in_sample(&r.id))?.clone(),
            id: r.id,
            label: r.label,
            split: r.split,
        });
    }
    if samples.is_empty() {
        return Err(Error::Empty("processed manifest"));
    }
    if samples.len() != header.samples {
        return Err(parse_err(1, format!("header announces {} samples, found {}", header.samples, samples.len())));
    }
    Ok(Dataset {
        task: header.task,
        frame_rate: header.frame_rate,
        segment_seconds: header.segment_seconds,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, generate_sample, SynthConfig};

    fn desk() -> PreprocessConfig {
        PreprocessConfig {
            out_size: 32,
            ..PreprocessConfig::default()
        }
    }

    #[test]
    fn corpus_round_trips_through_preprocessing() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("raw");
        let cfg = SynthConfig {
            n_samples: 10,
            ..SynthConfig::default()
        };
        generate_dataset(&cfg, &raw, 2).unwrap();
        let out = dir.path().join("processed");
        let pcfg = PreprocessConfig {
            emit_spectrograms: true,
            ..desk()
        };
        preprocess_dataset(&raw.join("manifest.jsonl"), &out, &pcfg, 2).unwrap();
        let data = load_dataset(&out.join("manifest.jsonl")).unwrap();
        assert_eq!(data.samples.len(), 10);
        let s = &data.samples[0];
        assert_eq!(s.audio.shape(), &[2, 1, 64, 124]);
        assert_eq!(s.video.shape(), &[16, 3, 32, 32]);
        assert_eq!(s.segment(1).shape(), &[1, 64, 124]);
        assert!(out.join("spectrograms/s0000_seg1.png").exists());
    }

    #[test]
    fn corrupted_wav_names_the_sample() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_samples: 10,
            ..SynthConfig::default()
        };
        generate_dataset(&cfg, dir.path(), 1).unwrap();
        std::fs::write(dir.path().join("s0003/audio.wav"), b"RIFFjunk").unwrap();
        let err = preprocess_dataset(&dir.path().join("manifest.jsonl"), &dir.path().join("p"), &desk(), 2).unwrap_err();
        match err {
            Error::Sample { id, .. } => assert_eq!(id, "s0003"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!dir.path().join("p/manifest.jsonl").exists());
    }

    #[test]
    fn bursts_survive_denoising() {
        // band energy around the burst pitch stays well above the floor
        let cfg = SynthConfig::default();
        let s = generate_sample(&cfg, 0).unwrap();
        let g = GateConfig::default();
        let stats = NoiseStats::estimate(&s.audio, &g).unwrap();
        let clean = spectral_gate_denoise(&s.audio, Some(&stats), &g).unwrap();
        assert!(clean.rms() > 0.3 * s.audio.rms(), "{} vs {}", clean.rms(), s.audio.rms());
    }
}
