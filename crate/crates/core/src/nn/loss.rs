use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-12;

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::shape(format!("{what}: {a} predictions vs {b} targets")));
    }
    Ok(())
}

/// Mean binary cross-entropy with natural logarithms.
pub fn bce_loss(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(y_hat.len(), y.len(), "bce")?;
    let m = y.len() as f64;
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    Ok(-total / m)
}

/// Gradient of [`bce_loss`] with respect to the probabilities.
pub fn bce_grad(y_hat: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y_hat.len(), y.len(), "bce")?;
    let m = y.len() as f64;
    Ok(y_hat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(t / p - (1.0 - t) / (1.0 - p)) / m
        })
        .collect())
}

/// Gradient of `bce(sigmoid(z))` with respect to the logits `z`.
pub fn bce_logit_grad(y_hat: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(y_hat.len(), y.len(), "bce")?;
    let m = y.len() as f64;
    Ok(y_hat.iter().zip(y).map(|(p, t)| (p - t) / m).collect())
}

/// Mean squared error over all elements.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "mse: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    check_lengths(pred.len(), target.len(), "mse")?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(s / pred.len() as f64)
}

pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse gradient shape mismatch"));
    }
    let m = pred.len() as f64;
    Tensor::new(
        pred.shape().to_vec(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| 2.0 * (p - t) / m)
            .collect(),
    )
}
