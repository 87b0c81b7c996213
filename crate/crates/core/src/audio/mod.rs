//! Audio front-end: WAV ingest, spectral-gate denoising, fixed-length
//! segmentation and log-mel features.

mod denoise;
mod mel;
mod stft;
mod wav;

pub use denoise::{spectral_gate_denoise, GateConfig, NoiseStats};
pub use mel::{log_mel, mel_filterbank};
pub use stft::{istft, stft, Spectrogram, StftConfig, Window};
pub use wav::{load_wav, write_wav};

use crate::error::{Error, Result};

pub const CANONICAL_RATE: u32 = 16_000;

/// Mono samples in `[-1, 1]` at a known rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("audio clip"));
        }
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if let Some(bad) = samples.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::config(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64).sqrt()
    }

    /// Linear-interpolation resampling; output length is
    /// `round(len · target / rate)`.
    pub fn resample(&self, target: u32) -> AudioClip {
        if target == self.sample_rate {
            return self.clone();
        }
        let n = self.samples.len();
        let ratio = f64::from(self.sample_rate) / f64::from(target);
        let out_len = ((n as f64) * f64::from(target) / f64::from(self.sample_rate)).round() as usize;
        let samples = (0..out_len.max(1))
            .map(|i| {
                let pos = i as f64 * ratio;
                let i0 = (pos.floor() as usize).min(n - 1);
                let i1 = (i0 + 1).min(n - 1);
                let frac = pos - i0 as f64;
                self.samples[i0] * (1.0 - frac) + self.samples[i1] * frac
            })
            .collect();
        AudioClip {
            samples,
            sample_rate: target,
        }
    }
}

/// Consecutive non-overlapping windows of exactly `duration` seconds; a
/// shorter trailing remainder is dropped.
pub fn segment_audio(clip: &AudioClip, duration: f64) -> Vec<AudioClip> {
    let len = (duration * f64::from(clip.sample_rate)).round() as usize;
    if len == 0 {
        return Vec::new();
    }
    clip.samples
        .chunks_exact(len)
        .map(|c| AudioClip {
            samples: c.to_vec(),
            sample_rate: clip.sample_rate,
        })
        .collect()
}
