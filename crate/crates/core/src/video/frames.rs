use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};

use super::{Landmarks, Point};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frames `[T, 3, H, W]` in `[0, 1]` with one landmark triple per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Tensor,
    pub frame_rate: f64,
    pub landmarks: Vec<Landmarks>,
}

impl FrameSequence {
    pub fn new(frames: Tensor, frame_rate: f64, landmarks: Vec<Landmarks>) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::Frames(format!("expected [T, 3, H, W], got {s:?}")));
        }
        if landmarks.len() != s[0] {
            return Err(Error::Frames(format!(
                "{} landmark records for {} frames",
                landmarks.len(),
                s[0]
            )));
        }
        let (h, w) = (s[2] as f64, s[3] as f64);
        for (i, lm) in landmarks.iter().enumerate() {
            for p in [lm.left_eye, lm.right_eye, lm.mouth] {
                if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0) {
                    return Err(Error::Frames(format!(
                        "frame {i}: landmark ({}, {}) outside {w}×{h}",
                        p.x, p.y
                    )));
                }
            }
            if (lm.left_eye - lm.right_eye).norm() < 1e-9 {
                return Err(Error::Frames(format!("frame {i}: eyes coincide")));
            }
        }
        Ok(FrameSequence {
            frames,
            frame_rate,
            landmarks,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn frame_index(path: &Path) -> Option<usize> {
    let name = path.file_name()?.to_str()?;
    let stem = name
        .strip_suffix(".png")
        .or_else(|| name.strip_suffix(".pgm"))?;
    let digits = stem.strip_prefix("frame_")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Parses one `lx ly rx ry mx my` record per non-empty line.
pub fn parse_landmarks(path: &Path) -> Result<Vec<Landmarks>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: e.to_string(),
            })?;
        if nums.len() != 6 || nums.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                detail: format!("expected six finite numbers, got {}", nums.len()),
            });
        }
        out.push(Landmarks {
            left_eye: Point::new(nums[0], nums[1]),
            right_eye: Point::new(nums[2], nums[3]),
            mouth: Point::new(nums[4], nums[5]),
        });
    }
    Ok(out)
}

pub fn write_landmarks(path: &Path, landmarks: &[Landmarks]) -> Result<()> {
    let mut text = String::new();
    for lm in landmarks {
        text.push_str(&format!(
            "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            lm.left_eye.x, lm.left_eye.y, lm.right_eye.x, lm.right_eye.y, lm.mouth.x, lm.mouth.y
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Loads `frame_%06d.png` / `.pgm` files in index order plus their landmark
/// sidecar. Indices must run contiguously from 0.
pub fn load_frames(dir: &Path, landmarks_file: &Path, frame_rate: f64) -> Result<FrameSequence> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(dir.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if let Some(i) = frame_index(&path) {
            files.push((i, path));
        }
    }
    if files.is_empty() {
        return Err(Error::Frames(format!("no frames in {}", dir.display())));
    }
    files.sort();
    for (expected, (i, _)) in files.iter().enumerate() {
        if *i != expected {
            return Err(Error::Frames(format!(
                "missing frame_{expected:06} in {}",
                dir.display()
            )));
        }
    }
    let mut dims = None;
    let mut data = Vec::new();
    for (_, path) in &files {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(Error::Frames(format!(
                    "{} is {w}×{h}, earlier frames are {}×{}",
                    path.display(),
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        let plane = (w * h) as usize;
        let start = data.len();
        data.resize(start + 3 * plane, 0.0);
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[start + c * plane + i] = f64::from(px[c]) / 255.0;
            }
        }
    }
    let (w, h) = dims.expect("at least one frame");
    let frames = Tensor::new(vec![files.len(), 3, h as usize, w as usize], data)?;
    let landmarks = parse_landmarks(landmarks_file)?;
    FrameSequence::new(frames, frame_rate, landmarks)
}

/// Writes `[T, 3, H, W]` as 8-bit RGB `frame_%06d.png`.
pub fn write_frames(dir: &Path, frames: &Tensor) -> Result<()> {
    let s = frames.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::Frames(format!("expected [T, 3, H, W], got {s:?}")));
    }
    std::fs::create_dir_all(dir)?;
    let (h, w) = (s[2], s[3]);
    let plane = h * w;
    for (t, frame) in frames.data().chunks(3 * plane).enumerate() {
        let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            let i = y as usize * w + x as usize;
            Rgb([0, 1, 2].map(|c| (frame[c * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8))
        });
        let path = dir.join(format!("frame_{t:06}.png"));
        img.save(&path).map_err(|source| Error::Image { path, source })?;
    }
    Ok(())
}
