//! Similarity-transform face alignment from three landmarks.
//!
//! In output coordinates the eye line is horizontal, the eye midpoint sits at
//! `(size/2, size/3)` and the mouth lies `size/3` below the eye line.

use super::{Landmarks, Point};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `p' = s · R(θ) · p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentTransform {
    pub theta: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AlignmentTransform {
    pub fn identity() -> Self {
        AlignmentTransform {
            theta: 0.0,
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// Row-major 2×3 affine matrix.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let (s, c) = self.theta.sin_cos();
        [
            [self.scale * c, -self.scale * s, self.tx],
            [self.scale * s, self.scale * c, self.ty],
        ]
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = self.matrix();
        Point::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    pub fn inverse_apply(&self, p: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (p.x - self.tx, p.y - self.ty);
        Point::new((c * dx + s * dy) / self.scale, (-s * dx + c * dy) / self.scale)
    }
}

/// Target positions for a square output of side `size`.
pub fn canonical_targets(size: usize) -> (Point, f64) {
    let s = size as f64;
    (Point::new(s / 2.0, s / 3.0), s / 3.0)
}

pub fn compute_alignment(landmarks: &Landmarks, out_size: usize) -> Result<AlignmentTransform> {
    let eye = landmarks.right_eye - landmarks.left_eye;
    let eye_len = eye.norm();
    if eye_len < 1e-9 {
        return Err(Error::DegenerateLandmarks("eyes coincide".into()));
    }
    let mid = landmarks.eye_midpoint();
    let unit = Point::new(eye.x / eye_len, eye.y / eye_len);
    let to_mouth = landmarks.mouth - mid;
    // perpendicular distance from the mouth to the eye line, positive below it
    let drop = unit.x * to_mouth.y - unit.y * to_mouth.x;
    if drop.abs() < 1e-9 {
        return Err(Error::DegenerateLandmarks("mouth lies on the eye line".into()));
    }
    if drop < 0.0 {
        return Err(Error::DegenerateLandmarks(
            "mouth is above the eye line (mirrored landmarks)".into(),
        ));
    }
    let theta = -eye.y.atan2(eye.x);
    let (target_mid, target_drop) = canonical_targets(out_size);
    let scale = target_drop / drop;
    let rotated = AlignmentTransform {
        theta,
        scale,
        tx: 0.0,
        ty: 0.0,
    }
    .apply(mid);
    Ok(AlignmentTransform {
        theta,
        scale,
        tx: target_mid.x - rotated.x,
        ty: target_mid.y - rotated.y,
    })
}

/// Warps every frame of `[T, C, H, W]` into `[T, C, out_h, out_w]` by
/// inverse-mapping output pixels and sampling bilinearly; samples that fall
/// outside the source are 0.
pub fn apply_alignment(frames: &Tensor, transform: &AlignmentTransform, out: (usize, usize)) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 4 {
        return Err(Error::shape("apply_alignment", format!("expected [T, C, H, W], got {s:?}")));
    }
    let (t, c, h, w) = (s[0], s[1], s[2], s[3]);
    let (oh, ow) = out;
    let src = frames.data();
    let mut data = vec![0.0; t * c * oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let p = transform.inverse_apply(Point::new(x as f64, y as f64));
            let Some(taps) = bilinear_taps(p, w, h) else {
                continue;
            };
            for plane in 0..t * c {
                let base = plane * h * w;
                let v: f64 = taps.iter().map(|&(i, wt)| src[base + i] * wt).sum();
                data[(plane * oh + y) * ow + x] = v;
            }
        }
    }
    Tensor::new(vec![t, c, oh, ow], data)
}

/// Up to four (flat index, weight) pairs, or `None` outside the image.
fn bilinear_taps(p: Point, w: usize, h: usize) -> Option<[(usize, f64); 4]> {
    const EPS: f64 = 1e-9;
    if !(p.x >= -EPS && p.y >= -EPS && p.x <= (w - 1) as f64 + EPS && p.y <= (h - 1) as f64 + EPS) {
        return None;
    }
    let x = p.x.clamp(0.0, (w - 1) as f64);
    let y = p.y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    Some([
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical() -> Landmarks {
        Landmarks {
            left_eye: Point::new(112.0 - 30.0, 224.0 / 3.0),
            right_eye: Point::new(112.0 + 30.0, 224.0 / 3.0),
            mouth: Point::new(112.0, 2.0 * 224.0 / 3.0),
        }
    }

    fn rotate_about(p: Point, c: Point, angle: f64) -> Point {
        let (s, co) = angle.sin_cos();
        let d = p - c;
        Point::new(c.x + co * d.x - s * d.y, c.y + s * d.x + co * d.y)
    }

    #[test]
    fn canonical_pose_is_identity() {
        let t = compute_alignment(&canonical(), 224).unwrap();
        assert!(t.theta.abs() < 1e-6);
        assert!((t.scale - 1.0).abs() < 1e-6);
        assert!(t.tx.abs() < 1e-6 && t.ty.abs() < 1e-6);
    }

    #[test]
    fn rotated_face_is_counter_rotated() {
        let lm = canonical();
        let c = Point::new(112.0, 112.0);
        let angle = 30f64.to_radians();
        let rot = Landmarks {
            left_eye: rotate_about(lm.left_eye, c, angle),
            right_eye: rotate_about(lm.right_eye, c, angle),
            mouth: rotate_about(lm.mouth, c, angle),
        };
        let t = compute_alignment(&rot, 224).unwrap();
        assert!((t.theta.to_degrees() + 30.0).abs() < 1e-6);
        assert!((t.scale - 1.0).abs() < 1e-6);
    }

    #[test]
    fn doubled_face_is_halved() {
        let lm = canonical();
        let c = Point::new(0.0, 0.0);
        let scale = |p: Point| Point::new(c.x + 2.0 * p.x, c.y + 2.0 * p.y);
        let big = Landmarks {
            left_eye: scale(lm.left_eye),
            right_eye: scale(lm.right_eye),
            mouth: scale(lm.mouth),
        };
        let t = compute_alignment(&big, 224).unwrap();
        assert!((t.scale - 0.5).abs() < 1e-6);
    }

    #[test]
    fn degenerate_landmarks_rejected() {
        let p = Point::new(10.0, 10.0);
        let coincident = Landmarks {
            left_eye: p,
            right_eye: p,
            mouth: Point::new(10.0, 30.0),
        };
        assert!(compute_alignment(&coincident, 224).is_err());
        let collinear = Landmarks {
            left_eye: Point::new(0.0, 10.0),
            right_eye: Point::new(20.0, 10.0),
            mouth: Point::new(10.0, 10.0),
        };
        assert!(compute_alignment(&collinear, 224).is_err());
    }

    #[test]
    fn identity_warp_copies_frame() {
        let data: Vec<f64> = (0..3 * 224 * 224).map(|i| (i % 97) as f64 / 97.0).collect();
        let frames = Tensor::new(vec![1, 3, 224, 224], data).unwrap();
        let out = apply_alignment(&frames, &AlignmentTransform::identity(), (224, 224)).unwrap();
        let err = out
            .data()
            .iter()
            .zip(frames.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6);
    }

    #[test]
    fn constant_frame_stays_constant_inside() {
        let frames = Tensor::full(vec![2, 3, 60, 80], 0.4);
        let t = AlignmentTransform {
            theta: 0.3,
            scale: 1.7,
            tx: 5.0,
            ty: -3.0,
        };
        let out = apply_alignment(&frames, &t, (32, 32)).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let p = t.inverse_apply(Point::new(x as f64, y as f64));
                if p.x > 0.0 && p.y > 0.0 && p.x < 79.0 && p.y < 59.0 {
                    assert!((out.at(&[1, 2, y, x]) - 0.4).abs() < 1e-12);
                }
            }
        }
    }
}
