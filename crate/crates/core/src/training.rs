//! Audio pre-training, freezing, and loss-fusion fine-tuning of the video
//! model, plus the α/β grid search.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{Split, Task};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_recording, audio_segment_scores, aligned_audio_score, classification_metrics, regression_metrics, Scorer};
use crate::models::{AudioNetConfig, Network};
use crate::pipeline::{Dataset, ProcessedSample};
use crate::rng;
use crate::tensor::{Adam, ModelParams, Tape, Tensor, Var};
use crate::video::{augment, sample_clip, AugmentConfig};

/// Mixing weights of `ℓ_B = α·ℓ_S + β·ℓ_V`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionLossConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for FusionLossConfig {
    fn default() -> Self {
        FusionLossConfig { alpha: 0.6, beta: 0.4 }
    }
}

impl FusionLossConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = FusionLossConfig { alpha, beta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || !(self.alpha + self.beta - 1.0).abs().le(&1e-9) {
            return Err(Error::config(format!(
                "fusion weights must be non-negative and sum to 1, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Epochs, learning rates and sampling settings for both stages.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    pub audio_epochs: usize,
    pub audio_lr: f64,
    pub fusion_epochs: usize,
    pub fusion_lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Frames per training clip.
    pub clip_len: usize,
    pub augment: AugmentConfig,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            audio_epochs: 100,
            audio_lr: 1e-4,
            fusion_epochs: 150,
            fusion_lr: 1e-3,
            batch_size: 8,
            seed: 0,
            clip_len: 64,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainSchedule {
    /// 30 epochs per stage on 8-frame clips, both stages at lr 1e-4.
    pub fn desk(seed: u64) -> Self {
        TrainSchedule {
            audio_epochs: 30,
            fusion_epochs: 30,
            fusion_lr: 1e-4,
            clip_len: 8,
            seed,
            ..TrainSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.audio_epochs == 0 || self.fusion_epochs == 0 {
            return Err(Error::config("epoch counts must be positive"));
        }
        for (name, lr) in [("audio", self.audio_lr), ("fusion", self.fusion_lr)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config(format!("{name} learning rate must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 || self.clip_len == 0 {
            return Err(Error::config("batch size and clip length must be positive"));
        }
        self.augment.validate()
    }
}

/// Predictions and labels of equal, non-zero length.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch {
    pred: Vec<f64>,
    label: Vec<f64>,
}

impl PredictionBatch {
    pub fn new(pred: Vec<f64>, label: Vec<f64>) -> Result<Self> {
        if pred.is_empty() {
            return Err(Error::Empty("prediction batch"));
        }
        if pred.len() != label.len() {
            return Err(Error::config(format!("{} predictions for {} labels", pred.len(), label.len())));
        }
        Ok(PredictionBatch { pred, label })
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
}

/// `(1/n) Σ |ŷ − y|`.
pub fn mae_loss(batch: &PredictionBatch) -> f64 {
    batch.pred.iter().zip(&batch.label).map(|(p, y)| (p - y).abs()).sum::<f64>() / batch.len() as f64
}

/// `α·ℓ_S + β·ℓ_V`.
pub fn fusion_loss(l_s: f64, l_v: f64, cfg: &FusionLossConfig) -> f64 {
    cfg.alpha * l_s + cfg.beta * l_v
}

/// Tape form of [`fusion_loss`]; gradients reach whatever graphs feed the
/// two inputs, so a constant `l_s` contributes none.
pub fn fusion_loss_var(tape: &mut Tape, l_s: Var, l_v: Var, cfg: &FusionLossConfig) -> Result<Var> {
    let a = tape.scale(l_s, cfg.alpha);
    let b = tape.scale(l_v, cfg.beta);
    tape.add(a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: Split,
    pub loss_s: Option<f64>,
    pub loss_v: Option<f64>,
    pub loss_b: Option<f64>,
    pub accuracy: Option<f64>,
    pub mae: Option<f64>,
}

/// Per-epoch losses and validation metrics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn rows(&self, split: Split) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r
            .deserialize()
            .enumerate()
            .map(|(i, row)| {
                row.map_err(|e: csv::Error| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    detail: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(History { rows })
    }
}

/// Trained parameters with their history; `best_epoch` is the epoch whose
/// parameters were kept.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: History,
    pub best_epoch: usize,
}

fn check_finite(value: f64, epoch: usize, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { epoch, step, value })
    }
}

/// One optimizer step on `loss`; parameters without a gradient get zeros.
fn apply_step(tape: &mut Tape, loss: Var, vars: &[Var], params: &mut ModelParams, adam: &mut Adam) -> Result<()> {
    let mut grads = tape.backward(loss)?;
    let g: Vec<Tensor> = vars
        .iter()
        .zip(params.tensors())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
        .collect();
    adam.step(params, &g)
}

/// Validation loss and metrics from recording-level scores in target units.
struct ValScores {
    loss: f64,
    accuracy: Option<f64>,
    mae: f64,
}

fn score_split(task: Task, scores: &[f64], samples: &[&ProcessedSample]) -> Result<ValScores> {
    let targets: Vec<f64> = samples.iter().map(|s| task.target(s.label)).collect();
    let labels: Vec<f64> = samples.iter().map(|s| s.label).collect();
    let (loss, _) = regression_metrics(scores, &targets)?;
    let in_units: Vec<f64> = scores.iter().map(|&s| task.from_target(s)).collect();
    let (mae, _) = regression_metrics(&in_units, &labels)?;
    let accuracy = match task {
        Task::Classification => Some(classification_metrics(scores, &labels, 0.5)?.1),
        Task::Regression => None,
    };
    Ok(ValScores { loss, accuracy, mae })
}

/// Trains the audio network on every (recording, segment) pair of the train
/// split. The parameters of the epoch with the lowest validation loss are
/// returned frozen.
pub fn pretrain_audio(data: &Dataset, net: &AudioNetConfig, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    schedule.validate()?;
    let train = data.require(Split::Train)?;
    let val = data.require(Split::Val)?;
    let task = data.task;
    let items: Vec<(usize, usize)> = train
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.segments()).map(move |k| (i, k)))
        .collect();

    let mut params = net.init(schedule.seed);
    let mut adam = Adam::new(&params, schedule.audio_lr);
    let mut history = History::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=schedule.audio_epochs {
        let mut order = items.clone();
        order.shuffle(&mut rng::stream(schedule.seed, "audio-order", &[epoch as u64]));
        let mut total = 0.0;
        for (step, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let x = Tensor::stack(&chunk.iter().map(|&(i, k)| train[i].segment(k)).collect::<Vec<_>>())?;
            let y = Tensor::new(vec![chunk.len(), 1], chunk.iter().map(|&(i, _)| task.target(train[i].label)).collect())?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let vars: Vec<Var> = bound.vars().collect();
            let xv = tape.constant(x);
            let pred = net.forward(&mut tape, &bound, xv)?;
            let loss = tape.mae(pred, y)?;
            let value = tape.value(loss).item();
            check_finite(value, epoch, step)?;
            total += value * chunk.len() as f64;
            apply_step(&mut tape, loss, &vars, &mut params, &mut adam)?;
        }
        let train_loss = total / items.len() as f64;
        history.rows.push(HistoryRow {
            epoch,
            split: Split::Train,
            loss_s: Some(train_loss),
            loss_v: None,
            loss_b: None,
            accuracy: None,
            mae: None,
        });

        let scores = val
            .iter()
            .map(|s| aggregate_recording(&audio_segment_scores(net, &params, s)?).map_err(|e| e.in_sample(&s.id)))
            .collect::<Result<Vec<_>>>()?;
        let v = score_split(task, &scores, &val)?;
        check_finite(v.loss, epoch, usize::MAX)?;
        history.rows.push(HistoryRow {
            epoch,
            split: Split::Val,
            loss_s: Some(v.loss),
            loss_v: None,
            loss_b: None,
            accuracy: v.accuracy,
            mae: Some(v.mae),
        });
        if best.as_ref().is_none_or(|(l, _, _)| v.loss < *l) {
            best = Some((v.loss, epoch, params.clone()));
        }
    }
    let (_, best_epoch, mut params) = best.expect("at least one epoch");
    params.freeze();
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}

/// Frozen audio model supplying `ℓ_S` during fusion training.
pub struct AudioTeacher<'a> {
    pub net: &'a AudioNetConfig,
    pub params: &'a ModelParams,
    pub fusion: FusionLossConfig,
}

/// Fine-tunes a video network with `ℓ_B = α·ℓ_S + β·ℓ_V` against a frozen
/// audio model. The audio parameters are only read.
pub fn train_fusion<V: Network>(data: &Dataset, teacher: &AudioTeacher<'_>, video: &V, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    if !teacher.params.is_frozen() {
        return Err(Error::AudioNotFrozen);
    }
    teacher.fusion.validate()?;
    Network::validate(teacher.net, teacher.params)?;
    train_video_core(data, video, schedule, Some(teacher))
}

/// Video-only training with `ℓ_V`.
pub fn train_video<V: Network>(data: &Dataset, video: &V, schedule: &TrainSchedule) -> Result<TrainOutcome> {
    train_video_core(data, video, schedule, None)
}

fn train_video_core<V: Network>(data: &Dataset, net: &V, schedule: &TrainSchedule, teacher: Option<&AudioTeacher<'_>>) -> Result<TrainOutcome> {
    schedule.validate()?;
    let train = data.require(Split::Train)?;
    let val = data.require(Split::Val)?;
    let task = data.task;
    let seed = schedule.seed;

    // frozen audio scores per segment, computed once
    let audio_scores: Option<Vec<Vec<f64>>> = teacher
        .map(|t| {
            train
                .iter()
                .map(|s| audio_segment_scores(t.net, t.params, s).map_err(|e| e.in_sample(&s.id)))
                .collect()
        })
        .transpose()?;

    let mut params = net.init(seed);
    let mut adam = Adam::new(&params, schedule.fusion_lr);
    let mut history = History::default();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=schedule.fusion_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(seed, "video-order", &[epoch as u64]));
        let (mut sum_s, mut sum_v, mut sum_b) = (0.0, 0.0, 0.0);
        for (step, chunk) in order.chunks(schedule.batch_size).enumerate() {
            let mut clips = Vec::with_capacity(chunk.len());
            let mut starts = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let mut r = rng::stream(seed, "clip", &[epoch as u64, i as u64]);
                let (clip, start) = sample_clip(&train[i].video, schedule.clip_len, &mut r)?;
                let clip = augment(&clip, &schedule.augment, &mut r)?;
                clips.push(clip.swap_leading_axes()?);
                starts.push(start);
            }
            let targets: Vec<f64> = chunk.iter().map(|&i| task.target(train[i].label)).collect();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, true);
            let vars: Vec<Var> = bound.vars().collect();
            let x = tape.constant(Tensor::stack(&clips)?);
            let pred = net.forward(&mut tape, &bound, x)?;
            let l_v = tape.mae(pred, Tensor::new(vec![chunk.len(), 1], targets.clone())?)?;
            let loss = match (teacher, &audio_scores) {
                (Some(t), Some(scores)) => {
                    let l_s = chunk
                        .iter()
                        .zip(&starts)
                        .zip(&targets)
                        .map(|((&i, &start), y)| {
                            let a = aligned_audio_score(&scores[i], start, schedule.clip_len, train[i].frames(), data.frame_rate, data.segment_seconds);
                            (a - y).abs()
                        })
                        .sum::<f64>()
                        / chunk.len() as f64;
                    sum_s += l_s * chunk.len() as f64;
                    let l_s = tape.constant(Tensor::scalar(l_s));
                    fusion_loss_var(&mut tape, l_s, l_v, &t.fusion)?
                }
                _ => l_v,
            };
            let lv = tape.value(l_v).item();
            let lb = tape.value(loss).item();
            check_finite(lb, epoch, step)?;
            sum_v += lv * chunk.len() as f64;
            sum_b += lb * chunk.len() as f64;
            apply_step(&mut tape, loss, &vars, &mut params, &mut adam)?;
        }
        let n = train.len() as f64;
        let fused = teacher.is_some();
        history.rows.push(HistoryRow {
            epoch,
            split: Split::Train,
            loss_s: fused.then_some(sum_s / n),
            loss_v: Some(sum_v / n),
            loss_b: Some(sum_b / n),
            accuracy: None,
            mae: None,
        });

        let scorer = Scorer {
            audio: teacher.map(|t| (t.net, t.params)),
            video: (net, &params),
            fusion: teacher.map_or(FusionLossConfig { alpha: 0.0, beta: 1.0 }, |t| t.fusion),
            clip_len: schedule.clip_len,
            frame_rate: data.frame_rate,
            segment_seconds: data.segment_seconds,
        };
        let scored = val
            .iter()
            .map(|s| scorer.evaluate_recording(s).map_err(|e| e.in_sample(&s.id)))
            .collect::<Result<Vec<_>>>()?;
        let video_scores: Vec<f64> = scored.iter().map(|r| r.video).collect();
        let v = score_split(task, &video_scores, &val)?;
        let (loss_s, loss_b) = match teacher {
            Some(t) => {
                let audio: Vec<f64> = scored.iter().map(|r| r.audio.unwrap_or(f64::NAN)).collect();
                let s = score_split(task, &audio, &val)?.loss;
                (Some(s), fusion_loss(s, v.loss, &t.fusion))
            }
            None => (None, v.loss),
        };
        check_finite(loss_b, epoch, usize::MAX)?;
        history.rows.push(HistoryRow {
            epoch,
            split: Split::Val,
            loss_s,
            loss_v: Some(v.loss),
            loss_b: Some(loss_b),
            accuracy: v.accuracy,
            mae: Some(v.mae),
        });
        if best.as_ref().is_none_or(|(l, _, _)| loss_b < *l) {
            best = Some((loss_b, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch,
    })
}

/// Evaluates `metric` at every distinct candidate α (β = 1 − α) in
/// ascending order and returns the best; ties keep the smaller α.
pub fn grid_search(candidates: &[f64], minimize: bool, mut metric: impl FnMut(FusionLossConfig) -> Result<f64>) -> Result<FusionLossConfig> {
    let mut alphas = candidates.to_vec();
    if alphas.is_empty() {
        return Err(Error::Empty("grid-search candidates"));
    }
    if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::config(format!("alpha candidate {bad} outside [0, 1]")));
    }
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut best: Option<(f64, FusionLossConfig)> = None;
    for a in alphas {
        let cfg = FusionLossConfig { alpha: a, beta: 1.0 - a };
        let m = metric(cfg)?;
        let better = match &best {
            None => true,
            Some((b, _)) if minimize => m < *b,
            Some((b, _)) => m > *b,
        };
        if better {
            best = Some((m, cfg));
        }
    }
    Ok(best.expect("non-empty candidates").1)
}

/// α ∈ {0.0, 0.1, …, 1.0}.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Picks α for the fused score `β·video + α·audio` of trained models on the
/// validation split: lowest MAE for regression, highest accuracy for
/// classification.
pub fn grid_search_alpha_beta<V: Network>(data: &Dataset, audio: (&AudioNetConfig, &ModelParams), video: (&V, &ModelParams), candidates: &[f64], clip_len: usize) -> Result<FusionLossConfig> {
    let val = data.require(Split::Val)?;
    let scorer = Scorer {
        audio: Some(audio),
        video,
        fusion: FusionLossConfig::default(),
        clip_len,
        frame_rate: data.frame_rate,
        segment_seconds: data.segment_seconds,
    };
    let scored = val.iter().map(|s| scorer.evaluate_recording(s).map_err(|e| e.in_sample(&s.id))).collect::<Result<Vec<_>>>()?;
    let task = data.task;
    grid_search(candidates, task == Task::Regression, |cfg| {
        let fused: Vec<f64> = scored.iter().map(|r| cfg.beta * r.video + cfg.alpha * r.audio.unwrap_or(f64::NAN)).collect();
        let v = score_split(task, &fused, &val)?;
        Ok(v.accuracy.unwrap_or(v.mae))
    })
}
