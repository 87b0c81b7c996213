//! Video front-end: frame/landmark ingest, face alignment, clip sampling and
//! augmentation.

mod align;
mod augment;
mod frames;

pub use align::{apply_alignment, canonical_targets, compute_alignment, AlignmentTransform};
pub use augment::{apply_draw, augment, flip_horizontal, AugmentConfig, AugmentDraw};
pub use frames::{load_frames, parse_landmarks, write_frames, write_landmarks, FrameSequence};

use std::ops::Sub;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// Eye centres and mouth centre in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmarks {
    pub left_eye: Point,
    pub right_eye: Point,
    pub mouth: Point,
}

impl Landmarks {
    pub fn eye_midpoint(&self) -> Point {
        Point::new(
            0.5 * (self.left_eye.x + self.right_eye.x),
            0.5 * (self.left_eye.y + self.right_eye.y),
        )
    }
}

/// Contiguous window of `clip_len` frames from `[T, C, H, W]` starting at a
/// uniform position in `[0, T − clip_len]`. Sequences shorter than the clip
/// are wrapped cyclically from frame 0. Returns the clip and its start.
pub fn sample_clip<R: Rng + ?Sized>(frames: &Tensor, clip_len: usize, rng: &mut R) -> Result<(Tensor, usize)> {
    let t = frames.shape().first().copied().unwrap_or(0);
    if t == 0 || frames.ndim() != 4 {
        return Err(Error::Frames("cannot sample from an empty sequence".into()));
    }
    let start = if t > clip_len { rng.random_range(0..=t - clip_len) } else { 0 };
    Ok((window(frames, start, clip_len)?, start))
}

/// Frames `start .. start + len`, indices taken modulo `T`.
pub fn window(frames: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 4 || s[0] == 0 || len == 0 {
        return Err(Error::Frames(format!("cannot take a window of {len} from {s:?}")));
    }
    let t = s[0];
    let per = frames.len() / t;
    let src = frames.data();
    let mut data = Vec::with_capacity(per * len);
    for i in 0..len {
        let f = (start + i) % t;
        data.extend_from_slice(&src[f * per..(f + 1) * per]);
    }
    let mut shape = s.to_vec();
    shape[0] = len;
    Tensor::new(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn indexed(t: usize) -> Tensor {
        let data = (0..t).flat_map(|f| std::iter::repeat_n(f as f64, 3 * 2 * 2)).collect();
        Tensor::new(vec![t, 3, 2, 2], data).unwrap()
    }

    #[test]
    fn exact_length_starts_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_clip(&indexed(64), 64, &mut rng).unwrap().1, 0);
        }
    }

    #[test]
    fn start_within_range_and_contiguous() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (c, start) = sample_clip(&indexed(100), 64, &mut rng).unwrap();
            assert!(start <= 36);
            for i in 0..64 {
                assert_eq!(c.at(&[i, 0, 0, 0]), (start + i) as f64);
            }
        }
    }

    #[test]
    fn short_sequences_wrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, _) = sample_clip(&indexed(10), 64, &mut rng).unwrap();
        assert_eq!(c.shape()[0], 64);
        for i in 0..64 {
            assert_eq!(c.at(&[i, 1, 1, 1]), (i % 10) as f64);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_clip(&indexed(90), 8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_clip(&indexed(90), 8, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }
}
