use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], label: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Empty("prediction batch"));
    }
    if pred.len() != label.len() {
        return Err(Error::config(format!(
            "{} predictions for {} labels",
            pred.len(),
            label.len()
        )));
    }
    if let Some(v) = pred.iter().chain(label).find(|v| !v.is_finite()) {
        return Err(Error::config(format!("non-finite value {v} in prediction batch")));
    }
    Ok(())
}

fn check_binary(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        Some(&bad) => Err(Error::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// `(mae, rmse)`.
pub fn regression_metrics(pred: &[f64], label: &[f64]) -> Result<(f64, f64)> {
    check_pair(pred, label)?;
    let n = pred.len() as f64;
    let (abs, sq) = pred
        .iter()
        .zip(label)
        .fold((0.0, 0.0), |(a, s), (p, y)| (a + (p - y).abs(), s + (p - y).powi(2)));
    Ok((abs / n, (sq / n).sqrt()))
}

/// `(precision, accuracy)` with predictions `score ≥ threshold`. Precision
/// is 0 when nothing is predicted positive.
pub fn classification_metrics(scores: &[f64], labels: &[f64], threshold: f64) -> Result<(f64, f64)> {
    check_pair(scores, labels)?;
    check_binary(labels)?;
    let (mut tp, mut fp, mut tn) = (0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    Ok((precision, (tp + tn) as f64 / scores.len() as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Area under the ROC curve as the fraction of (positive, negative) pairs
/// ranked correctly, ties counting one half, plus the curve swept over every
/// distinct score with `+∞` and `−∞` endpoints.
pub fn auc_roc(scores: &[f64], labels: &[f64]) -> Result<(f64, Vec<RocPoint>)> {
    check_pair(scores, labels)?;
    check_binary(labels)?;
    let pos = labels.iter().filter(|&&l| l == 1.0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // numerator counted in half-pairs so ties stay integral
    let mut half_pairs: u128 = 0;
    let mut roc = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        let (mut gp, mut gn) = (0u64, 0u64);
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] == 1.0 {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // positives in this group beat every negative scored strictly lower
        let neg_below = neg - fp - gn;
        half_pairs += 2 * u128::from(gp) * u128::from(neg_below) + u128::from(gp) * u128::from(gn);
        tp += gp;
        fp += gn;
        roc.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    roc.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    let auc = half_pairs as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64;
    Ok((auc, roc))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepressionLevel {
    Minimal,
    Mild,
    Moderate,
    Severe,
}

impl DepressionLevel {
    pub const ALL: [DepressionLevel; 4] = [
        DepressionLevel::Minimal,
        DepressionLevel::Mild,
        DepressionLevel::Moderate,
        DepressionLevel::Severe,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DepressionLevel::Minimal => "minimal",
            DepressionLevel::Mild => "mild",
            DepressionLevel::Moderate => "moderate",
            DepressionLevel::Severe => "severe",
        }
    }
}

/// Severity band of a 0–63 score; fractional scores are floored first.
pub fn bdi_level(score: f64) -> Result<DepressionLevel> {
    if !(0.0..=63.0).contains(&score) {
        return Err(Error::ScoreOutOfRange(score));
    }
    Ok(match score.floor() as u32 {
        0..=13 => DepressionLevel::Minimal,
        14..=19 => DepressionLevel::Mild,
        20..=28 => DepressionLevel::Moderate,
        _ => DepressionLevel::Severe,
    })
}

/// Mean of a recording's sub-clip scores.
pub fn aggregate_recording(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("sub-clip scores"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
