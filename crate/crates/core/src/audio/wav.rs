use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::{AudioClip, CANONICAL_RATE};
use crate::error::{Error, Result};

/// Reads a 16-bit PCM mono WAV, scales samples by 1/32768 and resamples to
/// 16 kHz by linear interpolation when needed.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav {
            path: path.to_path_buf(),
            detail: format!("{:?} {}-bit, need 16-bit PCM", spec.sample_format, spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav {
            path: path.to_path_buf(),
            detail: format!("{} channels, need mono", spec.channels),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    if samples.is_empty() {
        return Err(Error::MalformedWav {
            path: path.to_path_buf(),
            detail: "no samples".into(),
        });
    }
    let clip = AudioClip::new(samples, spec.sample_rate)?;
    Ok(if spec.sample_rate == CANONICAL_RATE {
        clip
    } else {
        clip.resample(CANONICAL_RATE)
    })
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            Error::NotFound(path.to_path_buf())
        }
        hound::Error::Unsupported => Error::UnsupportedWav {
            path: path.to_path_buf(),
            detail: "unsupported encoding".into(),
        },
        other => Error::MalformedWav {
            path: path.to_path_buf(),
            detail: other.to_string(),
        },
    }
}

/// Writes a clip as 16-bit PCM mono, clamping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut w = WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(to_io)?;
    }
    w.finalize().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, rate: u32, values: &[i16]) {
        let spec = WavSpec {
            channels: 1,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &v in values {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn full_scale_sample_is_just_below_one() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 16000, &[32767, -32768, 0]);
        let clip = load_wav(&p).unwrap();
        assert!((clip.samples[0] - 0.99997).abs() < 1e-5);
        assert_eq!(clip.samples[1], -1.0);
    }

    #[test]
    fn silence_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, 16000, &[0; 100]);
        assert!(load_wav(&p).unwrap().samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eight_khz_input_doubles_in_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lo.wav");
        write_raw(&p, 8000, &[100; 400]);
        let clip = load_wav(&p).unwrap();
        assert_eq!(clip.sample_rate, 16000);
        assert_eq!(clip.samples.len(), 800);
    }

    #[test]
    fn distinct_errors_for_each_failure() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_wav(dir.path().join("none.wav")), Err(Error::NotFound(_))));

        let bad = dir.path().join("bad.wav");
        std::fs::write(&bad, b"RIFF----not a wave file").unwrap();
        assert!(matches!(load_wav(&bad), Err(Error::MalformedWav { .. })));

        let stereo = dir.path().join("st.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&stereo, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&stereo), Err(Error::UnsupportedWav { .. })));

        let float = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&float, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&float), Err(Error::UnsupportedWav { .. })));
    }

    #[test]
    fn write_then_load_round_trips_within_quantisation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let clip = AudioClip::new(vec![0.5, -0.25, 0.0, 0.999], 16000).unwrap();
        write_wav(&p, &clip).unwrap();
        let back = load_wav(&p).unwrap();
        for (a, b) in back.samples.iter().zip(&clip.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
