use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-clip photometric augmentation. Every delta is a maximum magnitude in
/// `[0, 0.1]`; the actual offset is drawn uniformly from `[-delta, delta]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            brightness: 0.1,
            contrast: 0.1,
            saturation: 0.1,
            hue: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            flip_prob: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
            ("hue", self.hue),
        ] {
            if !(0.0..=0.1).contains(&v) {
                return Err(Error::config(format!("{name} delta {v} outside [0, 0.1]")));
            }
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config(format!("flip probability {} outside [0, 1]", self.flip_prob)));
        }
        Ok(())
    }
}

/// The random choices made for one clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub flip: bool,
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

impl AugmentDraw {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let mut sym = |d: f64| if d > 0.0 { rng.random_range(-d..=d) } else { 0.0 };
        let brightness = sym(cfg.brightness);
        let contrast = sym(cfg.contrast);
        let saturation = sym(cfg.saturation);
        let hue = sym(cfg.hue);
        let flip = cfg.flip_prob > 0.0 && rng.random_bool(cfg.flip_prob);
        AugmentDraw {
            flip,
            brightness,
            contrast,
            saturation,
            hue,
        }
    }
}

/// Applies one draw identically to every frame of a `[T, 3, H, W]` clip.
pub fn augment<R: Rng + ?Sized>(clip: &Tensor, cfg: &AugmentConfig, rng: &mut R) -> Result<Tensor> {
    cfg.validate()?;
    let draw = AugmentDraw::sample(cfg, rng);
    apply_draw(clip, &draw)
}

pub fn apply_draw(clip: &Tensor, draw: &AugmentDraw) -> Result<Tensor> {
    let s = clip.shape();
    if s.len() != 4 || s[1] != 3 {
        return Err(Error::shape("augment", format!("expected [T, 3, H, W], got {s:?}")));
    }
    let mut out = clip.clone();
    if draw.flip {
        out = flip_horizontal(&out);
    }
    let (t, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    let data = out.data_mut();
    if draw.brightness != 0.0 {
        data.iter_mut().for_each(|v| *v += draw.brightness);
    }
    if draw.contrast != 0.0 {
        let factor = 1.0 + draw.contrast;
        for frame in data.chunks_mut(3 * plane) {
            let mean = frame.iter().sum::<f64>() / frame.len() as f64;
            frame.iter_mut().for_each(|v| *v = (*v - mean) * factor + mean);
        }
    }
    if draw.saturation != 0.0 || draw.hue != 0.0 {
        for f in 0..t {
            let frame = &mut data[f * 3 * plane..(f + 1) * 3 * plane];
            for i in 0..plane {
                let rgb = [frame[i], frame[plane + i], frame[2 * plane + i]].map(|v| v.clamp(0.0, 1.0));
                let (mut hh, mut ss, vv) = rgb_to_hsv(rgb);
                ss = (ss * (1.0 + draw.saturation)).clamp(0.0, 1.0);
                // rotation by δ·π radians, hue stored in turns
                hh = (hh + draw.hue / 2.0).rem_euclid(1.0);
                let [r, g, b] = hsv_to_rgb(hh, ss, vv);
                frame[i] = r;
                frame[plane + i] = g;
                frame[2 * plane + i] = b;
            }
        }
    }
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(out)
}

/// Mirrors every row: column `x` moves to `W − 1 − x`.
pub fn flip_horizontal(clip: &Tensor) -> Tensor {
    let w = *clip.shape().last().expect("non-empty shape");
    let mut out = clip.clone();
    for row in out.data_mut().chunks_mut(w) {
        row.reverse();
    }
    out
}

fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (sector as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}
