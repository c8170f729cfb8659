//! Spike-detection scores.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// Matched `(truth, estimate)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// One-to-one matching of estimated to true spike positions, each pair at
/// most `t0` apart, with as many pairs as possible.
///
/// All windows have the same width, so scanning the truths in order and
/// taking the earliest unused estimate inside the window is optimal.
/// Duplicate indices are ignored. When both sets are empty the score is 1.
pub fn match_spikes(truth: &[usize], est: &[usize], t0: usize) -> MatchResult {
    let mut truth = truth.to_vec();
    truth.sort_unstable();
    truth.dedup();
    let mut est = est.to_vec();
    est.sort_unstable();
    est.dedup();

    let mut pairs = Vec::new();
    let mut next = 0;
    for &t in &truth {
        while next < est.len() && est[next] + t0 < t {
            next += 1;
        }
        if next < est.len() && est[next] <= t + t0 {
            pairs.push((t, est[next]));
            next += 1;
        }
    }

    let tp = pairs.len();
    let (precision, recall) = match (truth.is_empty(), est.is_empty()) {
        (true, true) => (1.0, 1.0),
        _ => (ratio(tp, est.len()), ratio(tp, truth.len())),
    };
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    MatchResult {
        pairs,
        true_positives: tp,
        precision,
        recall,
        f_score,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `‖γ − γ̂‖₁` between two count vectors.
pub fn count_error(gamma: &[usize], gamma_hat: &[usize]) -> Result<usize> {
    if gamma.len() != gamma_hat.len() {
        return Err(Error::Shape(format!(
            "count vectors differ in length ({} vs {})",
            gamma.len(),
            gamma_hat.len()
        )));
    }
    Ok(gamma
        .iter()
        .zip(gamma_hat)
        .map(|(&a, &b)| a.abs_diff(b))
        .sum())
}

/// Positions whose value exceeds `threshold`.
pub fn threshold_indices(values: &[f64], threshold: f64) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect()
}
