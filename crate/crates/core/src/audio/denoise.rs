use rustfft::num_complex::Complex;

use super::stft::{analyze, overlap_add, StftConfig, Window};
use super::AudioClip;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateConfig {
    pub stft: StftConfig,
    /// Threshold = mean + `n_std` · std of each bin's magnitudes.
    pub n_std: f64,
    /// 1.0 removes gated bins entirely, 0.0 leaves the clip untouched.
    pub prop_decrease: f64,
    /// 3×3 box filter over the binary mask before it is applied.
    pub smooth: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            stft: StftConfig {
                n_fft: 512,
                hop: 256,
                window: Window::SqrtHann,
            },
            n_std: 1.5,
            prop_decrease: 1.0,
            smooth: true,
        }
    }
}

/// Per-frequency magnitude statistics that set the gate thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NoiseStats {
    pub fn estimate(clip: &AudioClip, cfg: &GateConfig) -> Result<Self> {
        let frames = analyze(&pad(&clip.samples, cfg.stft)?, cfg.stft)?;
        Ok(Self::from_frames(&frames))
    }

    fn from_frames(frames: &[Vec<Complex<f64>>]) -> Self {
        let bins = frames[0].len();
        let n = frames.len() as f64;
        let mut mean = vec![0.0; bins];
        let mut std = vec![0.0; bins];
        for k in 0..bins {
            let m = frames.iter().map(|f| f[k].norm()).sum::<f64>() / n;
            let var = frames.iter().map(|f| (f[k].norm() - m).powi(2)).sum::<f64>() / n;
            mean[k] = m;
            std[k] = var.sqrt();
        }
        NoiseStats { mean, std }
    }

    /// Statistics whose threshold is −∞ in every bin, so the gate passes
    /// everything.
    pub fn all_pass(bins: usize) -> Self {
        NoiseStats {
            mean: vec![f64::NEG_INFINITY; bins],
            std: vec![0.0; bins],
        }
    }

    fn threshold(&self, k: usize, n_std: f64) -> f64 {
        self.mean[k] + n_std * self.std[k]
    }
}

/// Zero-pads half a window in front and enough behind that every original
/// sample is covered by full overlap.
fn pad(samples: &[f64], cfg: StftConfig) -> Result<Vec<f64>> {
    if samples.len() < cfg.n_fft {
        return Err(Error::ClipTooShort {
            len: samples.len(),
            needed: cfg.n_fft,
        });
    }
    let front = cfg.n_fft / 2;
    let mut total = samples.len() + front + cfg.n_fft;
    let rem = (total - cfg.n_fft) % cfg.hop;
    if rem != 0 {
        total += cfg.hop - rem;
    }
    let mut out = vec![0.0; total];
    out[front..front + samples.len()].copy_from_slice(samples);
    Ok(out)
}

fn smooth_mask(mask: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let frames = mask.len();
    let bins = mask[0].len();
    let mut out = vec![vec![0.0; bins]; frames];
    for t in 0..frames {
        for k in 0..bins {
            let mut sum = 0.0;
            let mut count = 0.0;
            for tt in t.saturating_sub(1)..=(t + 1).min(frames - 1) {
                for kk in k.saturating_sub(1)..=(k + 1).min(bins - 1) {
                    sum += mask[tt][kk];
                    count += 1.0;
                }
            }
            out[t][k] = sum / count;
        }
    }
    out
}

/// Spectral gating: bins whose magnitude falls below a per-frequency
/// statistical threshold are attenuated, then the clip is resynthesised at
/// its original length. Without `noise`, statistics come from the clip.
pub fn spectral_gate_denoise(
    clip: &AudioClip,
    noise: Option<&NoiseStats>,
    cfg: &GateConfig,
) -> Result<AudioClip> {
    let padded = pad(&clip.samples, cfg.stft)?;
    let mut frames = analyze(&padded, cfg.stft)?;
    let own;
    let stats = match noise {
        Some(s) => {
            if s.mean.len() != cfg.stft.bins() || s.std.len() != cfg.stft.bins() {
                return Err(Error::shape(
                    "spectral_gate_denoise",
                    format!("noise stats for {} bins, need {}", s.mean.len(), cfg.stft.bins()),
                ));
            }
            s
        }
        None => {
            own = NoiseStats::from_frames(&frames);
            &own
        }
    };
    let mut mask: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            f.iter()
                .enumerate()
                .map(|(k, c)| if c.norm() >= stats.threshold(k, cfg.n_std) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    if cfg.smooth {
        mask = smooth_mask(&mask);
    }
    for (frame, m) in frames.iter_mut().zip(&mask) {
        for (c, &mv) in frame.iter_mut().zip(m) {
            let gain = 1.0 - cfg.prop_decrease * (1.0 - mv);
            *c *= gain;
        }
    }
    let (mut out, norm) = overlap_add(&frames, cfg.stft, padded.len());
    for (o, w) in out.iter_mut().zip(&norm) {
        *o = if *w > 1e-10 { *o / w } else { 0.0 };
    }
    let front = cfg.stft.n_fft / 2;
    let samples = out[front..front + clip.samples.len()]
        .iter()
        .map(|v| v.clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(samples, clip.sample_rate)
}
