//! Metrics, recording-level scoring and report files.

mod metrics;
pub mod plot;

pub use metrics::{aggregate_recording, auc_roc, bdi_level, classification_metrics, regression_metrics, DepressionLevel, RocPoint};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{Split, Task};
use crate::error::{Error, Result};
use crate::models::{AudioNetConfig, Network};
use crate::par;
use crate::pipeline::{Dataset, ProcessedSample};
use crate::tensor::{ModelParams, Tensor};
use crate::training::FusionLossConfig;
use crate::video::window;
use plot::{line_chart, Series};

/// Everything needed to score a recording.
pub struct Scorer<'a, V: Network> {
    pub audio: Option<(&'a AudioNetConfig, &'a ModelParams)>,
    pub video: (&'a V, &'a ModelParams),
    pub fusion: FusionLossConfig,
    pub clip_len: usize,
    pub frame_rate: f64,
    pub segment_seconds: f64,
}

/// Recording-level scores in target units (probabilities, or scores ÷ 63).
#[derive(Clone, Debug, PartialEq)]
pub struct RecordingScores {
    pub video: f64,
    pub audio: Option<f64>,
    pub fused: Option<f64>,
    pub sub_clips: usize,
}

/// Index of the audio segment containing frame `f`, clamped to the last
/// segment for frames past the final full segment.
pub fn segment_of_frame(f: usize, frame_rate: f64, segment_seconds: f64, segments: usize) -> usize {
    (((f as f64 / frame_rate) / segment_seconds).floor() as usize).min(segments - 1)
}

/// Mean score of the audio segments overlapping frames `start .. start + len`
/// (frame indices taken modulo `total`).
pub fn aligned_audio_score(segment_scores: &[f64], start: usize, len: usize, total: usize, frame_rate: f64, segment_seconds: f64) -> f64 {
    let hit: BTreeSet<usize> = (start..start + len)
        .map(|f| segment_of_frame(f % total, frame_rate, segment_seconds, segment_scores.len()))
        .collect();
    hit.iter().map(|&k| segment_scores[k]).sum::<f64>() / hit.len() as f64
}

/// Per-segment audio scores of one recording.
pub fn audio_segment_scores(net: &AudioNetConfig, params: &ModelParams, sample: &ProcessedSample) -> Result<Vec<f64>> {
    Ok(net.predict(params, &sample.audio)?.into_data())
}

impl<V: Network> Scorer<'_, V> {
    /// Tiles the recording into consecutive `clip_len`-frame sub-clips (the
    /// last one wrapped from frame 0), scores each against its time-aligned
    /// audio segments, and averages.
    pub fn evaluate_recording(&self, sample: &ProcessedSample) -> Result<RecordingScores> {
        let t = sample.frames();
        let l = self.clip_len;
        if l == 0 {
            return Err(Error::config("clip length must be positive"));
        }
        let k = t.div_ceil(l);
        let clips = (0..k)
            .map(|i| window(&sample.video, i * l, l)?.swap_leading_axes())
            .collect::<Result<Vec<_>>>()?;
        let (vnet, vparams) = self.video;
        let video = vnet.predict(vparams, &Tensor::stack(&clips)?)?.into_data();
        let video_score = aggregate_recording(&video)?;
        let Some((anet, aparams)) = self.audio else {
            return Ok(RecordingScores {
                video: video_score,
                audio: None,
                fused: None,
                sub_clips: k,
            });
        };
        let seg = audio_segment_scores(anet, aparams, sample)?;
        let audio: Vec<f64> = (0..k)
            .map(|i| aligned_audio_score(&seg, i * l, l, t, self.frame_rate, self.segment_seconds))
            .collect();
        let fused: Vec<f64> = video
            .iter()
            .zip(&audio)
            .map(|(v, a)| self.fusion.beta * v + self.fusion.alpha * a)
            .collect();
        Ok(RecordingScores {
            video: video_score,
            audio: Some(aggregate_recording(&audio)?),
            fused: Some(aggregate_recording(&fused)?),
            sub_clips: k,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingResult {
    pub id: String,
    pub label: f64,
    pub audio: Option<f64>,
    pub video: f64,
    pub fused: Option<f64>,
}

/// Named metrics of one score source (audio, video or fusion).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMetrics {
    pub model: String,
    pub values: Vec<(String, f64)>,
    pub roc: Option<Vec<RocPoint>>,
}

impl ModelMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Metrics for scores and labels in label units.
    pub fn compute(model: &str, task: Task, scores: &[f64], labels: &[f64], threshold: f64) -> Result<Self> {
        let mut values = vec![("n".to_string(), scores.len() as f64)];
        let (mae, rmse) = regression_metrics(scores, labels)?;
        values.push(("mae".into(), mae));
        values.push(("rmse".into(), rmse));
        let mut roc = None;
        match task {
            Task::Classification => {
                let (precision, accuracy) = classification_metrics(scores, labels, threshold)?;
                values.push(("precision".into(), precision));
                values.push(("accuracy".into(), accuracy));
                match auc_roc(scores, labels) {
                    Ok((auc, points)) => {
                        values.push(("auc".into(), auc));
                        roc = Some(points);
                    }
                    Err(Error::SingleClass) => {}
                    Err(e) => return Err(e),
                }
            }
            Task::Regression => {
                // predictions are clamped into the scale before binning
                let mut truth = [0usize; 4];
                let mut pred = [0usize; 4];
                for (&s, &y) in scores.iter().zip(labels) {
                    truth[bdi_level(y)? as usize] += 1;
                    pred[bdi_level(s.clamp(0.0, 63.0))? as usize] += 1;
                }
                for (i, level) in DepressionLevel::ALL.iter().enumerate() {
                    values.push((format!("true.{}", level.as_str()), truth[i] as f64));
                    values.push((format!("pred.{}", level.as_str()), pred[i] as f64));
                }
            }
        }
        Ok(ModelMetrics {
            model: model.to_string(),
            values,
            roc,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub task: Task,
    pub split: Split,
    pub models: Vec<ModelMetrics>,
    pub recordings: Vec<RecordingResult>,
}

/// Scores every recording of `split` and computes metrics for each
/// available score source.
pub fn evaluate_split<V: Network + Sync>(data: &Dataset, split: Split, scorer: &Scorer<'_, V>, threshold: f64, threads: usize) -> Result<MetricsReport>
where
    for<'a> Scorer<'a, V>: Sync,
{
    let samples = data.require(split)?;
    let task = data.task;
    let scored = par::map_indexed(samples.len(), threads, |i| {
        scorer.evaluate_recording(samples[i]).map_err(|e| e.in_sample(&samples[i].id))
    })?;
    let recordings: Vec<RecordingResult> = samples
        .iter()
        .zip(&scored)
        .map(|(s, r)| RecordingResult {
            id: s.id.clone(),
            label: s.label,
            audio: r.audio.map(|v| task.from_target(v)),
            video: task.from_target(r.video),
            fused: r.fused.map(|v| task.from_target(v)),
        })
        .collect();
    let labels: Vec<f64> = recordings.iter().map(|r| r.label).collect();
    let mut models = Vec::new();
    if recordings.iter().all(|r| r.audio.is_some()) {
        let s: Vec<f64> = recordings.iter().map(|r| r.audio.unwrap_or(0.0)).collect();
        models.push(ModelMetrics::compute("audio", task, &s, &labels, threshold)?);
    }
    let s: Vec<f64> = recordings.iter().map(|r| r.video).collect();
    models.push(ModelMetrics::compute("video", task, &s, &labels, threshold)?);
    if recordings.iter().all(|r| r.fused.is_some()) {
        let s: Vec<f64> = recordings.iter().map(|r| r.fused.unwrap_or(0.0)).collect();
        models.push(ModelMetrics::compute("fusion", task, &s, &labels, threshold)?);
    }
    Ok(MetricsReport {
        task,
        split,
        models,
        recordings,
    })
}

#[derive(Serialize, Deserialize)]
struct MetricRow {
    model: String,
    metric: String,
    value: f64,
}

impl MetricsReport {
    pub fn model(&self, name: &str) -> Option<&ModelMetrics> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Writes `metrics.csv`, `recordings.csv`, `report.txt` and, for
    /// classification, `roc_<model>.csv` plus `roc.svg`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
        for m in &self.models {
            for (metric, value) in &m.values {
                w.serialize(MetricRow {
                    model: m.model.clone(),
                    metric: metric.clone(),
                    value: *value,
                })?;
            }
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("recordings.csv"))?;
        for r in &self.recordings {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut curves = Vec::new();
        for m in &self.models {
            if let Some(roc) = &m.roc {
                let mut w = csv::Writer::from_path(dir.join(format!("roc_{}.csv", m.model)))?;
                for p in roc {
                    w.serialize(p)?;
                }
                w.flush()?;
                curves.push(Series {
                    name: m.model.clone(),
                    points: roc.iter().map(|p| (p.fpr, p.tpr)).collect(),
                });
            }
        }
        if !curves.is_empty() {
            let svg = line_chart("ROC", "false positive rate", "true positive rate", &curves, Some((0.0, 1.0, 0.0, 1.0)));
            std::fs::write(dir.join("roc.svg"), svg)?;
        }
        let rows: Vec<(String, ModelMetrics)> = self.models.iter().map(|m| (m.model.clone(), m.clone())).collect();
        std::fs::write(dir.join("report.txt"), render_table(&rows))?;
        Ok(())
    }
}

/// Reads a `metrics.csv` back into per-model metrics, in file order.
pub fn read_metrics(path: &Path) -> Result<Vec<ModelMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Csv(e),
    })?;
    let mut out: Vec<ModelMetrics> = Vec::new();
    for (i, row) in r.deserialize::<MetricRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            detail: e.to_string(),
        })?;
        match out.iter_mut().find(|m| m.model == row.model) {
            Some(m) => m.values.push((row.metric, row.value)),
            None => out.push(ModelMetrics {
                model: row.model,
                values: vec![(row.metric, row.value)],
                roc: None,
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::Empty("metrics report"));
    }
    Ok(out)
}

const SUMMARY: [&str; 6] = ["precision", "accuracy", "auc", "mae", "rmse", "n"];

/// Fixed-width table, one row per entry. Columns are the summary metrics
/// present in any row, in a fixed order.
pub fn render_table(rows: &[(String, ModelMetrics)]) -> String {
    let cols: Vec<&str> = SUMMARY
        .iter()
        .copied()
        .filter(|c| rows.iter().any(|(_, m)| m.get(c).is_some()))
        .collect();
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut s = String::new();
    let _ = write!(s, "{:<width$}", "model");
    for c in &cols {
        let _ = write!(s, " {c:>10}");
    }
    s.push('\n');
    for (name, m) in rows {
        let _ = write!(s, "{name:<width$}");
        for c in &cols {
            match m.get(c) {
                Some(v) if *c == "n" => {
                    let _ = write!(s, " {:>10}", v);
                }
                Some(v) => {
                    let _ = write!(s, " {v:>10.4}");
                }
                None => {
                    let _ = write!(s, " {:>10}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}
