//! ROC AUC by pair counting, RMSE, and per-task evaluation reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("AUC needs at least one positive and one negative label")]
    SingleClass,
    #[error("no values to evaluate")]
    Empty,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
}

/// Mann–Whitney AUC: (concordant + ½·tied) / (positives · negatives) over the
/// entries whose mask is true (all entries when `mask` is None). Labels > 0.5
/// count as positive.
pub fn roc_auc(scores: &[f64], labels: &[f64], mask: Option<&[bool]>) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    if let Some(m) = mask {
        if m.len() != scores.len() {
            return Err(MetricError::LengthMismatch(scores.len(), m.len()));
        }
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (&s, &l))| (s, l > 0.5))
        .collect();
    let pos = pairs.iter().filter(|p| p.1).count() as u64;
    let neg = pairs.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the Mann–Whitney U, kept integral so the result is exact
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < pairs.len() && pairs[j].0.total_cmp(&pairs[i].0).is_eq() {
            if pairs[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice_u += 2 * p * neg_below + p * n;
        neg_below += n;
        i = j;
    }
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// AUC as the trapezoid area under the ROC curve traced over every distinct
/// threshold. Kept as an independent cross-check of [`roc_auc`].
pub fn trapezoid_auc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().zip(labels).map(|(&s, &l)| (s, l > 0.5)).collect();
    let pos = pairs.iter().filter(|p| p.1).count() as f64;
    let neg = pairs.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(MetricError::SingleClass);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < pairs.len() {
        let (tp0, fp0) = (tp, fp);
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - fp0) / neg * (tp + tp0) / (2.0 * pos);
    }
    Ok(area)
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64, MetricError> {
    if preds.len() != targets.len() {
        return Err(MetricError::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Auc,
    Rmse,
}

/// Per-task metric values and their mean over the tasks that could be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: MetricKind,
    /// None when a task had a single class (AUC) or no labels.
    pub per_task: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

impl EvalReport {
    /// `preds[i][t]` is the prediction for sample i, task t; missing labels are skipped.
    pub fn evaluate(metric: MetricKind, preds: &[Vec<f64>], labels: &[Vec<Option<f64>>]) -> EvalReport {
        let tasks = labels.first().map_or(0, Vec::len);
        let per_task: Vec<Option<f64>> = (0..tasks)
            .map(|t| {
                let (s, l): (Vec<f64>, Vec<f64>) = preds
                    .iter()
                    .zip(labels)
                    .filter_map(|(p, l)| l[t].map(|y| (p[t], y)))
                    .unzip();
                match metric {
                    MetricKind::Auc => roc_auc(&s, &l, None).ok(),
                    MetricKind::Rmse => rmse(&s, &l).ok(),
                }
            })
            .collect();
        let scored: Vec<f64> = per_task.iter().flatten().copied().collect();
        let mean = if scored.is_empty() {
            None
        } else {
            Some(scored.iter().sum::<f64>() / scored.len() as f64)
        };
        EvalReport { metric, per_task, mean }
    }
}
