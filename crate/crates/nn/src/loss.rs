//! Masked losses. Each returns the mean over unmasked entries and its
//! gradient with respect to the predictions.

use thiserror::Error;

use crate::tensor::Scalar;

/// Probabilities are clamped to [ε, 1 − ε] before taking logs.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LossError {
    #[error("{preds} predictions, {labels} labels, {mask} mask entries")]
    ShapeMismatch { preds: usize, labels: usize, mask: usize },
    /// Every entry is masked; the batch has nothing to learn from.
    #[error("every label in the batch is masked")]
    AllMasked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: f64,
    pub grad: Vec<T>,
    /// Unmasked entries the mean was taken over.
    pub count: usize,
}

fn check<T: Scalar>(preds: &[T], labels: &[T], mask: &[T]) -> Result<usize, LossError> {
    if preds.len() != labels.len() || preds.len() != mask.len() {
        return Err(LossError::ShapeMismatch {
            preds: preds.len(),
            labels: labels.len(),
            mask: mask.len(),
        });
    }
    match mask.iter().filter(|m| **m > T::zero()).count() {
        0 => Err(LossError::AllMasked),
        n => Ok(n),
    }
}

fn masked<T: Scalar>(
    preds: &[T],
    labels: &[T],
    mask: &[T],
    term: impl Fn(f64, f64) -> (f64, f64),
) -> Result<LossOutput<T>, LossError> {
    let count = check(preds, labels, mask)?;
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let grad = preds
        .iter()
        .zip(labels)
        .zip(mask)
        .map(|((&p, &y), &m)| {
            if m <= T::zero() {
                return T::zero();
            }
            let (l, g) = term(p.as_f64(), y.as_f64());
            loss += l;
            T::of(g * inv)
        })
        .collect();
    Ok(LossOutput {
        loss: loss * inv,
        grad,
        count,
    })
}

/// Binary cross-entropy on probabilities.
pub fn masked_bce_loss<T: Scalar>(preds: &[T], labels: &[T], mask: &[T]) -> Result<LossOutput<T>, LossError> {
    masked(preds, labels, mask, |p, y| {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        let l = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
        (l, (p - y) / (p * (1.0 - p)))
    })
}

/// Binary cross-entropy of σ(z) written in terms of the raw output z, which
/// stays finite for any z.
pub fn masked_bce_with_logits<T: Scalar>(logits: &[T], labels: &[T], mask: &[T]) -> Result<LossOutput<T>, LossError> {
    masked(logits, labels, mask, |z, y| {
        let l = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        (l, 1.0 / (1.0 + (-z).exp()) - y)
    })
}

/// Mean squared error over unmasked entries.
pub fn mse_loss<T: Scalar>(preds: &[T], labels: &[T], mask: &[T]) -> Result<LossOutput<T>, LossError> {
    masked(preds, labels, mask, |p, y| ((p - y).powi(2), 2.0 * (p - y)))
}
