use eegdit_autograd::Tensor;

use super::Classifier;
use crate::error::{Error, Result};
use crate::signal::SignalDataset;

/// Test-set accuracy, macro one-vs-rest AUC and macro F1.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub acc: f64,
    pub auc: f64,
    pub f1: f64,
    /// Classes left out of the macro averages because the test set lacks them
    /// (or, for AUC, lacks any other class).
    pub skipped_classes: Vec<usize>,
}

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
/// `None` when either group is empty.
pub fn auc_rank(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Midranks over tie groups, 1-based.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += order[i..=j].iter().filter(|&&k| positive[k]).count() as f64 * mid;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

fn softmax_rows(logits: &Tensor) -> Vec<Vec<f64>> {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Metrics from logits `[n, k]` and true labels.
pub fn evaluate_logits(logits: &Tensor, labels: &[usize]) -> Result<Metrics> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape(format!("logits {:?} for {} labels", logits.shape(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty set"));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits".into()));
    }
    let k = logits.shape()[1];
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label {y} outside [0, {k})")));
    }
    // First maximum wins ties.
    let pred: Vec<usize> = logits
        .data()
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    let n = labels.len();
    let acc = pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / n as f64;

    let probs = softmax_rows(logits);
    let mut skipped = Vec::new();
    let (mut auc_sum, mut auc_n, mut f1_sum, mut f1_n) = (0.0, 0, 0.0, 0);
    for c in 0..k {
        let positive: Vec<bool> = labels.iter().map(|&y| y == c).collect();
        if !positive.contains(&true) {
            skipped.push(c);
            continue;
        }
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        match auc_rank(&scores, &positive) {
            Some(a) => {
                auc_sum += a;
                auc_n += 1;
            }
            None => skipped.push(c),
        }
        let tp = (0..n).filter(|&i| positive[i] && pred[i] == c).count() as f64;
        let fp = (0..n).filter(|&i| !positive[i] && pred[i] == c).count() as f64;
        let fne = (0..n).filter(|&i| positive[i] && pred[i] != c).count() as f64;
        f1_sum += 2.0 * tp / (2.0 * tp + fp + fne);
        f1_n += 1;
    }
    skipped.dedup();
    Ok(Metrics {
        acc,
        auc: if auc_n == 0 { f64::NAN } else { auc_sum / auc_n as f64 },
        f1: if f1_n == 0 { 0.0 } else { f1_sum / f1_n as f64 },
        skipped_classes: skipped,
    })
}

pub fn evaluate(model: &Classifier, test: &SignalDataset) -> Result<Metrics> {
    model.config().check_data(test)?;
    let labels = test
        .labels()
        .into_iter()
        .map(|l| l.ok_or_else(|| Error::invalid("test set must be labeled")))
        .collect::<Result<Vec<_>>>()?;
    let (_, logits) = model.infer(test.segments())?;
    evaluate_logits(&logits, &labels)
}
