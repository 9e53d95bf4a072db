//! Classifier training with a confidence-based quality gate.
//!
//! Optimisation uses the natural-log BCE. The gate works on the base-10
//! form `L10 = Le / ln 10`, mapped to an average confidence
//! `σ* = 10^(-L10)`: training stops once `σ* >= ζ` and the latest `N`
//! losses have flattened out.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierInput, ClassifierModel};
use crate::error::{Error, Result};
use crate::nn::{bce_logit_grad, bce_loss, epoch_batches, sigmoid, zero_grads, Adam, AdamConfig, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub zeta: f64,
    pub window_n: usize,
    pub slope_threshold: f64,
    pub max_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            zeta: 0.8,
            window_n: 10,
            slope_threshold: -1e-4,
            max_epochs: 2000,
            lr: 1e-3,
            batch_size: 64,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::invalid(format!("zeta must be in (0, 1), got {}", self.zeta)));
        }
        if self.window_n < 2 {
            return Err(Error::invalid("loss window N must be >= 2"));
        }
        if !(self.slope_threshold < 0.0) {
            return Err(Error::invalid("slope threshold must be negative"));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("max_epochs and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    WellTrained,
    UnderFitted,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::WellTrained => "well_trained",
            Verdict::UnderFitted => "under_fitted",
        })
    }
}

/// Base-10 loss from a natural-log loss.
pub fn to_base10(loss_e: f64) -> f64 {
    loss_e / std::f64::consts::LN_10
}

/// `10^(-L)` for a base-10 loss `L >= 0`.
pub fn sigma_star(loss: f64) -> Result<f64> {
    if !(loss >= 0.0) {
        return Err(Error::invalid(format!("loss must be non-negative, got {loss}")));
    }
    Ok(10f64.powf(-loss))
}

pub fn quality_gate(sigma: f64, zeta: f64) -> Verdict {
    if sigma >= zeta {
        Verdict::WellTrained
    } else {
        Verdict::UnderFitted
    }
}

/// Slope test over the latest `n` losses: with `X[0]` as the anchor, the
/// mean of `(X[i] - X[0]) / i` must exceed `slope_threshold`. Too little
/// history is never converged.
pub fn has_converged(history: &[f64], n: usize, slope_threshold: f64) -> bool {
    if n < 2 || history.len() < n {
        return false;
    }
    let x = &history[history.len() - n..];
    let mean = (1..n).map(|i| (x[i] - x[0]) / i as f64).sum::<f64>() / (n - 1) as f64;
    mean > slope_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub loss_e: f64,
    pub loss_10: f64,
    pub sigma_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<LossRecord>,
    pub verdict: Verdict,
    /// True when the loop stopped on the gate rather than the epoch cap.
    pub converged: bool,
}

impl TrainOutcome {
    pub fn final_record(&self) -> Option<&LossRecord> {
        self.history.last()
    }

    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,loss_e,loss_10,sigma_star\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{},{},{}", r.epoch, r.loss_e, r.loss_10, r.sigma_star);
        }
        s
    }

    pub fn write_loss_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.loss_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mini-batch BCE descent with Adam until the gate passes or the epoch cap.
/// The model is marked trained on return.
pub fn train_loop(
    model: &mut ClassifierModel,
    input: &ClassifierInput,
    labels: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = input.len();
    if n == 0 {
        return Err(Error::InsufficientData("training set is empty".into()));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} instances", labels.len())));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut history: Vec<LossRecord> = Vec::new();
    let mut losses: Vec<f64> = Vec::new();
    let mut converged = false;
    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for (b, idx) in epoch_batches(n, cfg.batch_size, &mut rng).into_iter().enumerate() {
            let x = input.gather(&idx)?;
            let y: Vec<f64> = idx.iter().map(|&i| labels[i]).collect();
            zero_grads(&mut model.params_mut());
            let logits = model.forward_logits(&x, true).map_err(|e| {
                Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}"))
            })?;
            let p: Vec<f64> = logits.data().iter().map(|&z| sigmoid(z)).collect();
            let loss = bce_loss(&p, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss is {loss} at epoch {epoch}, batch {b}; try a lower learning rate"
                )));
            }
            total += loss * idx.len() as f64;
            let g = Tensor::new(vec![idx.len(), 1], bce_logit_grad(&p, &y)?)?;
            model.backward_logits(&g)?;
            opt.step(&mut model.params_mut())?;
        }
        let loss_e = total / n as f64;
        let loss_10 = to_base10(loss_e);
        let sigma = sigma_star(loss_10)?;
        history.push(LossRecord {
            epoch,
            loss_e,
            loss_10,
            sigma_star: sigma,
        });
        losses.push(loss_10);
        log::debug!("epoch {epoch}: loss_e {loss_e:.6} sigma* {sigma:.4}");
        if quality_gate(sigma, cfg.zeta) == Verdict::WellTrained
            && has_converged(&losses, cfg.window_n, cfg.slope_threshold)
        {
            converged = true;
            break;
        }
    }
    let last = history.last().expect("max_epochs >= 1");
    let verdict = quality_gate(last.sigma_star, cfg.zeta);
    model.mark_trained();
    Ok(TrainOutcome {
        history,
        verdict,
        converged,
    })
}
