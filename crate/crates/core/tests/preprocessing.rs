use avfusion::audio::{segment_audio, spectral_gate_denoise, AudioClip, GateConfig, NoiseStats};
use avfusion::video::{compute_alignment, Landmarks, Point};
use proptest::prelude::*;

/// Tolerance on alignment residuals in output pixels.
const ALIGN_TOL: f64 = 1e-6;
/// Tolerance on the all-pass denoise round trip, per sample.
const IDENTITY_TOL: f64 = 1e-6;

fn landmarks(cx: f64, cy: f64, angle: f64, eye_dist: f64, drop: f64, along: f64) -> Landmarks {
    let (s, c) = angle.sin_cos();
    let half = eye_dist / 2.0;
    // below the eye line in image coordinates is the normal (-sin, cos)
    Landmarks {
        left_eye: Point::new(cx - c * half, cy - s * half),
        right_eye: Point::new(cx + c * half, cy + s * half),
        mouth: Point::new(cx - s * drop + c * along, cy + c * drop + s * along),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn alignment_meets_its_constraints(
        cx in 10.0f64..300.0,
        cy in 10.0f64..300.0,
        angle in -1.2f64..1.2,
        eye_dist in 4.0f64..120.0,
        drop in 2.0f64..150.0,
        along in -10.0f64..10.0,
        size in prop::sample::select(vec![32usize, 64, 112, 224]),
    ) {
        let lm = landmarks(cx, cy, angle, eye_dist, drop, along);
        let t = compute_alignment(&lm, size).unwrap();
        let s = size as f64;
        let l = t.apply(lm.left_eye);
        let r = t.apply(lm.right_eye);
        let m = t.apply(lm.mouth);
        let mid = Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0);
        prop_assert!((mid.x - s / 2.0).abs() < ALIGN_TOL);
        prop_assert!((mid.y - s / 3.0).abs() < ALIGN_TOL);
        // eye line horizontal, left eye on the left
        prop_assert!((r.y - l.y).abs() < ALIGN_TOL);
        prop_assert!(r.x > l.x);
        // mouth one third of the height below the eye line
        prop_assert!((m.y - mid.y - s / 3.0).abs() < ALIGN_TOL);
    }

    #[test]
    fn all_pass_gate_is_identity(seed in any::<u64>(), len in 512usize..6000) {
        let samples: Vec<f64> = (0..len)
            .map(|i| ((i as f64 * 0.37 + seed as f64 % 97.0).sin() * 0.4) + ((i * 7919) % 13) as f64 / 40.0 - 0.15)
            .collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        let cfg = GateConfig::default();
        let out = spectral_gate_denoise(&clip, Some(&NoiseStats::all_pass(cfg.stft.bins())), &cfg).unwrap();
        prop_assert_eq!(out.samples.len(), clip.samples.len());
        let worst = out.samples.iter().zip(&clip.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst < IDENTITY_TOL, "max deviation {}", worst);
    }

    #[test]
    fn segment_count_follows_floor_rule(len in 0usize..200_000, rate in prop::sample::select(vec![8000u32, 16000])) {
        let clip = AudioClip::new(vec![0.1; len.max(1)], rate).unwrap();
        let segs = segment_audio(&clip, 2.0);
        let per = 2 * rate as usize;
        prop_assert_eq!(segs.len(), len.max(1) / per);
        prop_assert!(segs.iter().all(|s| s.samples.len() == per));
    }
}
