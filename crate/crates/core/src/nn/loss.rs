//! Binary cross entropy over a batch of probabilities.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Predictions are clamped to `[EPS, 1-EPS]` before the logs.
pub const BCE_CLAMP_EPS: f32 = 1e-7;

/// Mean over the batch of `-[y·ln p + (1-y)·ln(1-p)]`, plus the gradient
/// wrt the predictions. Targets must be exactly 0 or 1. Where the clamp is
/// active the loss is locally constant in the prediction, so the gradient
/// there is 0.
pub fn bce_loss(pred: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::config("bce: prediction/target shape mismatch"));
    }
    if pred.is_empty() {
        return Err(Error::data("bce: empty batch"));
    }
    for &y in target.data() {
        if y != 0.0 && y != 1.0 {
            return Err(Error::data(format!("bce: target {y} outside {{0,1}}")));
        }
    }
    let n = pred.len() as f64;
    let mut loss = 0.0f64;
    let mut grad = Tensor::zeros(pred.shape());
    let gd = grad.data_mut();
    for (idx, (&p, &y)) in pred.data().iter().zip(target.data()).enumerate() {
        let clamped = p < BCE_CLAMP_EPS || p > 1.0 - BCE_CLAMP_EPS;
        let pc = p.clamp(BCE_CLAMP_EPS, 1.0 - BCE_CLAMP_EPS);
        loss -= f64::from(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        gd[idx] = if clamped {
            0.0
        } else {
            ((pc - y) / (pc * (1.0 - pc))) / n as f32
        };
    }
    let loss = (loss / n) as f32;
    if !loss.is_finite() {
        return Err(Error::numeric("bce: non-finite loss"));
    }
    Ok((loss, grad))
}
