//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers to run a subset:
//! `cargo test --release --test acceptance -- 2 3`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use avfusion::audio::{segment_audio, spectral_gate_denoise, AudioClip, GateConfig, NoiseStats};
use avfusion::datagen::{generate_dataset, Split, SynthConfig};
use avfusion::evaluation::{auc_roc, classification_metrics, regression_metrics, Scorer};
use avfusion::models::{AudioNetConfig, Head, Network, VideoNetConfig};
use avfusion::par;
use avfusion::pipeline::{load_dataset, preprocess_dataset, Dataset, PreprocessConfig};
use avfusion::training::{fusion_loss, pretrain_audio, train_fusion, train_video, AudioTeacher, FusionLossConfig, TrainSchedule};
use avfusion::video::{compute_alignment, Landmarks, Point};
use avfusion::ModelParams;
use common::oracles::{confusion, pair_count_auc, random_instance};
use common::{check_net, check_op, op_cases, random_tensor, relative_error, NET_TOL, OP_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

// Criterion 1
const OP_PROBES: usize = 8;
const NET_PROBES: usize = 6;
const GRAD_BUDGET: Duration = Duration::from_secs(5 * 60);
// Criterion 2
const AUC_INSTANCES: usize = 200;
const AUC_MAX_N: usize = 50;
const RMSE_BATCHES: usize = 1000;
const WORKED_RMSE: f64 = 1.29099;
const WORKED_RMSE_TOL: f64 = 5e-6;
// Criterion 3
const FUSION_TOL: f64 = 1e-12;
const LINEARITY_TRIPLES: usize = 1000;
// Criterion 5
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const CORPUS_SIZE: usize = 188;
const SPLIT_SIZES: (usize, usize, usize) = (113, 19, 56);
const DESK_FRAME: usize = 32;
const MIN_AUDIO_ACCURACY: f64 = 0.9;
const ORDERING_BUDGET: Duration = Duration::from_secs(30 * 60);
// Criterion 6
const NULL_SEED_OFFSET: u64 = 100;
const NULL_AUC_RANGE: (f64, f64) = (0.4, 0.6);
// Criterion 7
const ALIGN_TRIPLES: usize = 100;
const ALIGN_TOL: f64 = 1e-6;
const IDENTITY_CLIPS: usize = 20;
const IDENTITY_TOL: f64 = 1e-6;
const SEGMENT_DURATIONS: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut worst_op = 0.0f64;
    let mut failures = Vec::new();
    let cases = op_cases();
    for case in &cases {
        let err = check_op(&case.build, &case.inputs, OP_PROBES, 100);
        worst_op = worst_op.max(err);
        if !(err < OP_TOL) {
            failures.push(format!("{} {err:.2e}", case.name));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let audio_x = random_tensor(&[2, 1, 64, 70], &mut rng);
    let video_x = random_tensor(&[2, 3, 8, DESK_FRAME, DESK_FRAME], &mut rng).map(|v| 0.5 + 0.5 * v);
    let mut worst_net = 0.0f64;
    let mut probes = 0;
    let mut net = |name: &str, results: Vec<(String, f64, f64)>| {
        for (p, a, n) in results {
            let err = relative_error(a, n);
            worst_net = worst_net.max(err);
            probes += 1;
            if !(err < NET_TOL) {
                failures.push(format!("{name} {p} {err:.2e}"));
            }
        }
    };
    let anet = AudioNetConfig::desk(Head::Classification);
    net("audio", check_net(&anet, &anet.init(11), &audio_x, NET_PROBES, &["conv0.weight", "attn.u"], 11));
    let vnet = VideoNetConfig::desk(Head::Regression);
    net("video", check_net(&vnet, &vnet.init(21), &video_x, NET_PROBES, &["stem.weight", "layer0.block0.attn.w1"], 21));
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && elapsed < GRAD_BUDGET;
    outcome(
        pass,
        format!(
            "{} ops, max rel err {worst_op:.2e} (< {OP_TOL:e}); networks {probes} probes, max rel err {worst_net:.2e} (< {NET_TOL:e}); {:.1} s (< {} s){}",
            cases.len(),
            elapsed.as_secs_f64(),
            GRAD_BUDGET.as_secs(),
            if failures.is_empty() { String::new() } else { format!("; failures: {failures:?}") }
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut auc_mismatch = 0;
    let mut confusion_mismatch = 0;
    for _ in 0..AUC_INSTANCES {
        let (scores, labels) = random_instance(&mut rng, AUC_MAX_N);
        let (num, den) = pair_count_auc(&scores, &labels);
        if auc_roc(&scores, &labels).unwrap().0 != num as f64 / den as f64 {
            auc_mismatch += 1;
        }
        for threshold in [0.25, 0.5, 0.75] {
            let [[tn, fp], [_, tp]] = confusion(&scores, &labels, threshold);
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let accuracy = (tp + tn) as f64 / scores.len() as f64;
            if classification_metrics(&scores, &labels, threshold).unwrap() != (precision, accuracy) {
                confusion_mismatch += 1;
            }
        }
    }
    let mut rmse_violations = 0;
    for _ in 0..RMSE_BATCHES {
        let n = rng.random_range(1..=64);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-63.0..63.0)).collect();
        let label: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..63.0)).collect();
        let (mae, rmse) = regression_metrics(&pred, &label).unwrap();
        if rmse < mae * (1.0 - 1e-12) {
            rmse_violations += 1;
        }
    }
    let worked_auc = auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap().0;
    let (mae, rmse) = regression_metrics(&[2.0, 2.0, 5.0], &[1.0, 2.0, 3.0]).unwrap();
    let worked = worked_auc == 0.75 && mae == 1.0 && (rmse - WORKED_RMSE).abs() < WORKED_RMSE_TOL;
    outcome(
        auc_mismatch == 0 && confusion_mismatch == 0 && rmse_violations == 0 && worked,
        format!(
            "auc mismatches {auc_mismatch}/{AUC_INSTANCES}; confusion mismatches {confusion_mismatch}/{}; rmse < mae in {rmse_violations}/{RMSE_BATCHES}; worked auc {worked_auc}, mae {mae}, rmse {rmse:.6}",
            3 * AUC_INSTANCES
        ),
    )
}

fn fusion_fidelity() -> Outcome {
    let cfg = FusionLossConfig::default();
    let value = fusion_loss(1.0, 2.0, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..LINEARITY_TRIPLES {
        let (s, v, c): (f64, f64, f64) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
        let homogeneity = (fusion_loss(c * s, c * v, &cfg) - c * fusion_loss(s, v, &cfg)).abs();
        let additivity = (fusion_loss(s, v, &cfg) - fusion_loss(s, 0.0, &cfg) - fusion_loss(0.0, v, &cfg)).abs();
        worst = worst.max(homogeneity).max(additivity);
    }
    outcome(
        (value - 1.4).abs() < FUSION_TOL && worst < FUSION_TOL,
        format!("fusion_loss(1.0, 2.0, 0.6, 0.4) = {value:.15}; worst linearity residual {worst:.2e} over {LINEARITY_TRIPLES} triples (< {FUSION_TOL:e})"),
    )
}

fn sha256_file(path: &Path) -> String {
    let digest = Sha256::digest(std::fs::read(path).unwrap());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn build_corpus(cfg: &SynthConfig, dir: &Path) -> Dataset {
    generate_dataset(cfg, &dir.join("raw"), 1).unwrap();
    let pre = PreprocessConfig {
        out_size: DESK_FRAME,
        ..PreprocessConfig::default()
    };
    preprocess_dataset(&dir.join("raw/manifest.jsonl"), &dir.join("proc"), &pre, 1).unwrap();
    load_dataset(&dir.join("proc/manifest.jsonl")).unwrap()
}

fn scorer<'a>(data: &Dataset, audio: Option<(&'a AudioNetConfig, &'a ModelParams)>, video: (&'a VideoNetConfig, &'a ModelParams), clip_len: usize) -> Scorer<'a, VideoNetConfig> {
    Scorer {
        audio,
        video,
        fusion: FusionLossConfig::default(),
        clip_len,
        frame_rate: data.frame_rate,
        segment_seconds: data.segment_seconds,
    }
}

/// Recording-level `(label, audio, video, fused)` scores on one split.
fn split_scores(data: &Dataset, split: Split, s: &Scorer<'_, VideoNetConfig>) -> Vec<(f64, Option<f64>, f64, Option<f64>)> {
    data.split(split)
        .iter()
        .map(|r| {
            let out = s.evaluate_recording(r).unwrap();
            (r.label, out.audio, out.video, out.fused)
        })
        .collect()
}

fn mae_of(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (p, y): (Vec<f64>, Vec<f64>) = pairs.unzip();
    regression_metrics(&p, &y).unwrap().0
}

struct SeedRun {
    sizes: (usize, usize, usize),
    sha_before: String,
    sha_after_file: String,
    sha_after_memory: String,
    fused_val_mae: f64,
    fusion_branch_val_mae: f64,
    video_only_val_mae: f64,
    audio_val_accuracy: f64,
    audio_test_accuracy: f64,
}

fn ordering_seed(seed: u64) -> SeedRun {
    let dir = tempfile::tempdir().unwrap();
    let data = build_corpus(
        &SynthConfig {
            n_samples: CORPUS_SIZE,
            seed,
            ..SynthConfig::default()
        },
        dir.path(),
    );
    let sizes = (data.split(Split::Train).len(), data.split(Split::Val).len(), data.split(Split::Test).len());
    let schedule = TrainSchedule::desk(seed);
    let anet = AudioNetConfig::desk(Head::Classification);
    let audio = pretrain_audio(&data, &anet, &schedule).unwrap().params;
    let ckpt = dir.path().join("audio.avck");
    audio.save(&ckpt).unwrap();
    let sha_before = sha256_file(&ckpt);

    let vnet = VideoNetConfig::desk(Head::Classification);
    let teacher = AudioTeacher {
        net: &anet,
        params: &audio,
        fusion: FusionLossConfig::default(),
    };
    let fused = train_fusion(&data, &teacher, &vnet, &schedule).unwrap().params;
    let sha_after_file = sha256_file(&ckpt);
    let sha_after_memory: String = Sha256::digest(audio.to_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    let plain = train_video(&data, &vnet, &schedule).unwrap().params;

    let with_audio = scorer(&data, Some((&anet, &audio)), (&vnet, &fused), schedule.clip_len);
    let val = split_scores(&data, Split::Val, &with_audio);
    let fused_val_mae = mae_of(val.iter().map(|r| (r.3.unwrap(), r.0)));
    let fusion_branch_val_mae = mae_of(val.iter().map(|r| (r.2, r.0)));
    let audio_accuracy = |rows: &[(f64, Option<f64>, f64, Option<f64>)]| {
        let (s, y): (Vec<f64>, Vec<f64>) = rows.iter().map(|r| (r.1.unwrap(), r.0)).unzip();
        classification_metrics(&s, &y, 0.5).unwrap().1
    };
    let audio_val_accuracy = audio_accuracy(&val);
    let audio_test_accuracy = audio_accuracy(&split_scores(&data, Split::Test, &with_audio));
    let video_only = scorer(&data, None, (&vnet, &plain), schedule.clip_len);
    let video_only_val_mae = mae_of(split_scores(&data, Split::Val, &video_only).iter().map(|r| (r.2, r.0)));
    SeedRun {
        sizes,
        sha_before,
        sha_after_file,
        sha_after_memory,
        fused_val_mae,
        fusion_branch_val_mae,
        video_only_val_mae,
        audio_val_accuracy,
        audio_test_accuracy,
    }
}

fn freeze_contract(runs: &[SeedRun]) -> Outcome {
    let intact = runs
        .iter()
        .filter(|r| r.sha_before == r.sha_after_file && r.sha_before == r.sha_after_memory)
        .count();
    outcome(
        intact == runs.len(),
        format!(
            "audio checkpoint SHA-256 unchanged by {intact}/{} full fusion runs (seed {} {}…)",
            runs.len(),
            SEEDS[0],
            &runs[0].sha_before[..16]
        ),
    )
}

fn ordering(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let col = |f: fn(&SeedRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    let fused = median(col(|r| r.fused_val_mae));
    let branch = median(col(|r| r.fusion_branch_val_mae));
    let video = median(col(|r| r.video_only_val_mae));
    let audio_val = median(col(|r| r.audio_val_accuracy));
    let audio_test = median(col(|r| r.audio_test_accuracy));
    let sizes_ok = runs.iter().all(|r| r.sizes == SPLIT_SIZES);
    let pass = sizes_ok && fused <= video && audio_val >= MIN_AUDIO_ACCURACY && elapsed < ORDERING_BUDGET;
    outcome(
        pass,
        format!(
            "splits {:?}; median val MAE fusion {fused:.4} <= video-only {video:.4}; audio accuracy val {audio_val:.3} test {audio_test:.3} (>= {MIN_AUDIO_ACCURACY}); {} seeds in {:.1} min on {} threads (< {} min); fusion-trained video branch alone {branch:.4}",
            runs[0].sizes,
            runs.len(),
            elapsed.as_secs_f64() / 60.0,
            threads(),
            ORDERING_BUDGET.as_secs() / 60
        ),
    )
}

fn null_seed(seed: u64) -> (f64, f64) {
    let dir = tempfile::tempdir().unwrap();
    let data = build_corpus(
        &SynthConfig {
            n_samples: CORPUS_SIZE,
            seed,
            audio_shift_hz: 0.0,
            motion_amp_px: 0.0,
            ..SynthConfig::default()
        },
        dir.path(),
    );
    let schedule = TrainSchedule::desk(seed);
    let anet = AudioNetConfig::desk(Head::Classification);
    let audio = pretrain_audio(&data, &anet, &schedule).unwrap().params;
    let vnet = VideoNetConfig::desk(Head::Classification);
    let teacher = AudioTeacher {
        net: &anet,
        params: &audio,
        fusion: FusionLossConfig::default(),
    };
    let video = train_fusion(&data, &teacher, &vnet, &schedule).unwrap().params;
    let rows = split_scores(&data, Split::Test, &scorer(&data, Some((&anet, &audio)), (&vnet, &video), schedule.clip_len));
    let labels: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let fused: Vec<f64> = rows.iter().map(|r| r.3.unwrap()).collect();
    let (num, den) = pair_count_auc(&fused, &labels);
    (auc_roc(&fused, &labels).unwrap().0, num as f64 / den as f64)
}

fn null_check() -> Outcome {
    let results = par::map_indexed(SEEDS.len(), threads(), |i| Ok(null_seed(SEEDS[i] + NULL_SEED_OFFSET))).unwrap();
    let aucs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let consistent = results.iter().all(|(a, b)| a == b);
    let m = median(aucs.clone());
    outcome(
        consistent && (NULL_AUC_RANGE.0..=NULL_AUC_RANGE.1).contains(&m),
        format!("zero-signal test AUC per seed {aucs:.3?}; median {m:.3} in [{}, {}]", NULL_AUC_RANGE.0, NULL_AUC_RANGE.1),
    )
}

fn preprocessing_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_align = 0.0f64;
    for _ in 0..ALIGN_TRIPLES {
        let size = [32usize, 64, 224][rng.random_range(0..3)];
        let (cx, cy) = (rng.random_range(20.0..300.0), rng.random_range(20.0..300.0));
        let angle: f64 = rng.random_range(-1.0..1.0);
        let half = rng.random_range(3.0..60.0);
        let drop = rng.random_range(3.0..120.0);
        let along = rng.random_range(-8.0..8.0);
        let (s, c) = angle.sin_cos();
        let lm = Landmarks {
            left_eye: Point::new(cx - c * half, cy - s * half),
            right_eye: Point::new(cx + c * half, cy + s * half),
            mouth: Point::new(cx - s * drop + c * along, cy + c * drop + s * along),
        };
        let t = compute_alignment(&lm, size).unwrap();
        let (l, r, m) = (t.apply(lm.left_eye), t.apply(lm.right_eye), t.apply(lm.mouth));
        let side = size as f64;
        let mid = Point::new((l.x + r.x) / 2.0, (l.y + r.y) / 2.0);
        for residual in [mid.x - side / 2.0, mid.y - side / 3.0, r.y - l.y, m.y - mid.y - side / 3.0] {
            worst_align = worst_align.max(residual.abs());
        }
    }
    let cfg = GateConfig::default();
    let mut worst_identity = 0.0f64;
    for _ in 0..IDENTITY_CLIPS {
        let len = rng.random_range(512..20_000);
        let samples: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
        let clip = AudioClip::new(samples, 16_000).unwrap();
        let out = spectral_gate_denoise(&clip, Some(&NoiseStats::all_pass(cfg.stft.bins())), &cfg).unwrap();
        for (a, b) in out.samples.iter().zip(&clip.samples) {
            worst_identity = worst_identity.max((a - b).abs());
        }
    }
    let mut segment_errors = 0;
    for _ in 0..SEGMENT_DURATIONS {
        let seconds: f64 = rng.random_range(0.1..30.0);
        let len = (seconds * 16_000.0).floor() as usize;
        let clip = AudioClip::new(vec![0.0; len], 16_000).unwrap();
        if segment_audio(&clip, 2.0).len() != (len as f64 / 32_000.0).floor() as usize {
            segment_errors += 1;
        }
    }
    outcome(
        worst_align < ALIGN_TOL && worst_identity < IDENTITY_TOL && segment_errors == 0,
        format!(
            "alignment residual max {worst_align:.2e} over {ALIGN_TRIPLES} triples (< {ALIGN_TOL:e}); all-pass identity max {worst_identity:.2e} (< {IDENTITY_TOL:e}); segment count errors {segment_errors}/{SEGMENT_DURATIONS}"
        ),
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn end_to_end(root: &Path) -> Result<(), String> {
    let bin = env!("CARGO_BIN_EXE_avfusion");
    std::fs::create_dir_all(root).map_err(|e| e.to_string())?;
    let config = root.join("run.toml");
    std::fs::write(&config, "profile = \"desk\"\nseed = 5\nsynth.n_samples = 30\nschedule.audio.epochs = 2\nschedule.fusion.epochs = 2\n").map_err(|e| e.to_string())?;
    let steps: [&[&str]; 4] = [
        &["synth", "--out", "corpus"],
        &["preprocess", "--manifest", "corpus/manifest.jsonl", "--out", "proc"],
        &["train", "--data", "proc/manifest.jsonl", "--run", "run", "--stage", "all", "--grid-search"],
        &["evaluate", "--data", "proc/manifest.jsonl", "--run", "run", "--out", "eval"],
    ];
    for args in steps {
        let out = Command::new(bin)
            .current_dir(root)
            .arg("--config")
            .arg(&config)
            .args(["--threads", "2"])
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if let Err(e) = end_to_end(&a).and_then(|_| end_to_end(&b)) {
        return outcome(false, e);
    }
    let (fa, fb) = (files_under(&a), files_under(&b));
    let differing: Vec<_> = fa.keys().chain(fb.keys()).filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let required = ["run/audio.avck", "run/video.avck", "run/audio_history.csv", "run/video_history.csv", "eval/metrics.csv", "eval/report.txt"];
    let missing: Vec<_> = required.iter().filter(|r| !fa.contains_key(Path::new(r))).collect();
    outcome(
        differing.is_empty() && missing.is_empty(),
        format!(
            "{} files compared across two synth → preprocess → train → evaluate runs; {} differ{}",
            fa.len(),
            differing.len(),
            if missing.is_empty() { String::new() } else { format!("; missing {missing:?}") }
        ),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |c: u32| selected.is_empty() || selected.contains(&c);
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        eprintln!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    if wanted(1) {
        report(1, "gradient suite", gradient_suite());
    }
    if wanted(2) {
        report(2, "metric oracles", metric_oracles());
    }
    if wanted(3) {
        report(3, "fusion loss fidelity", fusion_fidelity());
    }
    if wanted(4) || wanted(5) {
        let seeds: &[u64] = if wanted(5) { &SEEDS } else { &SEEDS[..1] };
        let start = Instant::now();
        let runs = par::map_indexed(seeds.len(), threads(), |i| Ok(ordering_seed(seeds[i]))).unwrap();
        let elapsed = start.elapsed();
        if wanted(4) {
            report(4, "freeze contract", freeze_contract(&runs));
        }
        if wanted(5) {
            report(5, "fusion/video/audio ordering", ordering(&runs, elapsed));
        }
    }
    if wanted(6) {
        report(6, "null signal", null_check());
    }
    if wanted(7) {
        report(7, "preprocessing exactness", preprocessing_exactness());
    }
    if wanted(8) {
        report(8, "end-to-end determinism", determinism());
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    eprintln!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
