//! Brute-force metric references, written without reference to the library.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fraction of (positive, negative) pairs where the positive scores higher,
/// ties counting one half, by enumerating every pair. Returned as the exact
/// ratio `(numerator_halves, 2 · pairs)`.
pub fn pair_count_auc(scores: &[f64], labels: &[f64]) -> (u64, u64) {
    let mut halves = 0u64;
    let mut pairs = 0u64;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1.0 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0.0 {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                halves += 2;
            } else if scores[i] == scores[j] {
                halves += 1;
            }
        }
    }
    (halves, 2 * pairs)
}

/// `[[tn, fp], [fn, tp]]` at `score ≥ threshold`.
pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> [[usize; 2]; 2] {
    let mut m = [[0; 2]; 2];
    for (&s, &y) in scores.iter().zip(labels) {
        m[usize::from(y == 1.0)][usize::from(s >= threshold)] += 1;
    }
    m
}

/// Random scored binary instance with both classes present. Scores are drawn
/// from a small grid so ties are common.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.random_range(2..=max_n);
        let labels: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        if labels.iter().any(|&l| l == 1.0) && labels.iter().any(|&l| l == 0.0) {
            let scores = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 19.0).collect();
            return (scores, labels);
        }
    }
}
