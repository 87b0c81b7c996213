use super::Spectrogram;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters, `[n_mels, bins]`, spanning `fmin..fmax`.
pub fn mel_filterbank(n_mels: usize, bins: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Tensor {
    let n_fft = (bins - 1) * 2;
    let lo = hz_to_mel(fmin);
    let hi = hz_to_mel(fmax);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut w = vec![0.0; n_mels * bins];
    for m in 0..n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * f64::from(sample_rate) / n_fft as f64;
            let v = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            w[m * bins + k] = v;
        }
    }
    Tensor::new(vec![n_mels, bins], w).expect("n_mels·bins")
}

/// Log-mel features `[1, n_mels, frames]`: mel-weighted power over 0–8 kHz,
/// `ln(x + 1e-10)`, then zero-mean unit-variance over the whole clip.
pub fn log_mel(spec: &Spectrogram, n_mels: usize) -> Result<Tensor> {
    let bins = spec.bins();
    if n_mels == 0 || n_mels > bins {
        return Err(Error::shape(
            "log_mel",
            format!("{n_mels} mel bands requested from {bins} frequency bins"),
        ));
    }
    let frames = spec.frames();
    let fmax = (f64::from(spec.sample_rate) / 2.0).min(8000.0);
    let fb = mel_filterbank(n_mels, bins, spec.sample_rate, 0.0, fmax);
    let mag = spec.magnitude.data();
    let mut out = vec![0.0; n_mels * frames];
    for m in 0..n_mels {
        let row = &fb.data()[m * bins..(m + 1) * bins];
        for t in 0..frames {
            let power: f64 = row
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(k, &w)| w * mag[k * frames + t].powi(2))
                .sum();
            out[m * frames + t] = (power + LOG_FLOOR).ln();
        }
    }
    let n = out.len() as f64;
    let mean = out.iter().sum::<f64>() / n;
    let std = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    for v in &mut out {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
    Tensor::new(vec![1, n_mels, frames], out)
}

#[cfg(test)]
mod tests {
    use super::super::{stft, AudioClip, StftConfig};
    use super::*;

    #[test]
    fn two_second_clip_shape() {
        let samples = (0..32000).map(|i| ((i as f64) * 0.05).sin() * 0.3).collect();
        let spec = stft(&AudioClip::new(samples, 16000).unwrap(), StftConfig::default()).unwrap();
        let t = log_mel(&spec, 64).unwrap();
        assert_eq!(t.shape(), &[1, 64, 124]);
        let mean = t.mean();
        let std = (t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_input_is_constant_floor() {
        let spec = stft(&AudioClip::new(vec![0.0; 4096], 16000).unwrap(), StftConfig::default())
            .unwrap();
        let t = log_mel(&spec, 64).unwrap();
        // constant ln(1e-10) before normalisation, so all zeros after
        assert!(t.data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn too_many_bands_rejected() {
        let spec = stft(&AudioClip::new(vec![0.0; 1024], 16000).unwrap(), StftConfig::default())
            .unwrap();
        assert!(log_mel(&spec, 300).is_err());
    }

    #[test]
    fn filterbank_rows_are_nonempty() {
        let fb = mel_filterbank(64, 257, 16000, 0.0, 8000.0);
        for m in 0..64 {
            assert!(fb.data()[m * 257..(m + 1) * 257].iter().any(|&v| v > 0.0), "band {m}");
        }
    }
}
