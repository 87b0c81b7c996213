use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann.
    Hann,
    /// Square root of periodic Hann; at 50 % overlap its squares sum to one.
    SqrtHann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let h = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                match self {
                    Window::Hann => h,
                    Window::SqrtHann => h.sqrt(),
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 512,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames_for(&self, len: usize) -> Option<usize> {
        (len >= self.n_fft).then(|| 1 + (len - self.n_fft) / self.hop)
    }
}

/// Magnitude and phase, both `[bins, frames]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub magnitude: Tensor,
    pub phase: Tensor,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.magnitude.shape()[0]
    }

    pub fn frames(&self) -> usize {
        self.magnitude.shape()[1]
    }

    pub(crate) fn from_complex(
        frames: &[Vec<Complex<f64>>],
        config: StftConfig,
        sample_rate: u32,
    ) -> Self {
        let bins = config.bins();
        let n = frames.len();
        let mut mag = vec![0.0; bins * n];
        let mut phase = vec![0.0; bins * n];
        for (t, frame) in frames.iter().enumerate() {
            for (k, c) in frame.iter().enumerate() {
                mag[k * n + t] = c.norm();
                phase[k * n + t] = c.arg();
            }
        }
        Spectrogram {
            magnitude: Tensor::new(vec![bins, n], mag).expect("bins·frames"),
            phase: Tensor::new(vec![bins, n], phase).expect("bins·frames"),
            config,
            sample_rate,
        }
    }

    pub(crate) fn to_complex(&self) -> Vec<Vec<Complex<f64>>> {
        let (bins, n) = (self.bins(), self.frames());
        let m = self.magnitude.data();
        let p = self.phase.data();
        (0..n)
            .map(|t| {
                (0..bins)
                    .map(|k| Complex::from_polar(m[k * n + t], p[k * n + t]))
                    .collect()
            })
            .collect()
    }
}

/// Frame-major one-sided spectra of an unpadded signal.
pub(crate) fn analyze(samples: &[f64], config: StftConfig) -> Result<Vec<Vec<Complex<f64>>>> {
    let frames = config.frames_for(samples.len()).ok_or(Error::ClipTooShort {
        len: samples.len(),
        needed: config.n_fft,
    })?;
    let window = config.window.coefficients(config.n_fft);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.n_fft);
    let bins = config.bins();
    let mut buf = vec![Complex::new(0.0, 0.0); config.n_fft];
    Ok((0..frames)
        .map(|t| {
            let start = t * config.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(samples[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            buf[..bins].to_vec()
        })
        .collect())
}

/// Inverse FFT of each frame, windowed and overlap-added. Returns the summed
/// signal and the summed squared window, both of length `len`.
pub(crate) fn overlap_add(
    frames: &[Vec<Complex<f64>>],
    config: StftConfig,
    len: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = config.n_fft;
    let window = config.window.coefficients(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (t, frame) in frames.iter().enumerate() {
        buf[..frame.len()].copy_from_slice(frame);
        for k in frame.len()..n {
            buf[k] = frame[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * config.hop;
        for i in 0..n {
            if start + i >= len {
                break;
            }
            out[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    (out, norm)
}

/// Short-time Fourier transform without padding:
/// `frames = 1 + floor((len − n_fft) / hop)`.
pub fn stft(clip: &AudioClip, config: StftConfig) -> Result<Spectrogram> {
    let frames = analyze(&clip.samples, config)?;
    Ok(Spectrogram::from_complex(&frames, config, clip.sample_rate))
}

/// Weighted overlap-add inverse. Samples not covered by any window
/// coefficient come back as zero; everything else is reconstructed exactly
/// for an unmodified spectrogram.
pub fn istft(spec: &Spectrogram) -> Vec<f64> {
    let cfg = spec.config;
    let len = cfg.n_fft + (spec.frames() - 1) * cfg.hop;
    let (mut out, norm) = overlap_add(&spec.to_complex(), cfg, len);
    for (o, w) in out.iter_mut().zip(&norm) {
        if *w > 1e-10 {
            *o /= w;
        } else {
            *o = 0.0;
        }
    }
    out
}
