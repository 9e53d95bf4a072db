//! Central finite-difference gradient checking.
//!
//! The scalar probe is `L = Σ r ∘ f(x)` for a fixed random `r`; the analytic
//! side back-propagates `r`, the numeric side perturbs one coordinate at a
//! time and re-runs `forward` only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Tensor};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error of near-zero gradients.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub checked: usize,
}

impl GradCheckReport {
    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error {
            self.max_rel_error = e;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", what());
        }
    }
}

fn probe(out: &Tensor, r: &[f64]) -> f64 {
    out.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Checks input and parameter gradients of `layer` at `input`.
///
/// The layer must be deterministic across repeated forwards in the chosen
/// mode (dropout layers should be checked with `training = false` or via a
/// wrapper that fixes the mask).
pub fn check_layer(layer: &mut dyn Layer, input: &Tensor, training: bool, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = layer.forward(input, training)?;
    let r: Vec<f64> = (0..out.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let grad_in = layer.backward(&Tensor::new(out.shape().to_vec(), r.clone())?)?;
    let param_grads: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.data().to_vec()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + FD_STEP;
        let up = probe(&layer.forward(&x, training)?, &r);
        x.data_mut()[i] = orig - FD_STEP;
        let dn = probe(&layer.forward(&x, training)?, &r);
        x.data_mut()[i] = orig;
        report.record(|| format!("{} input[{i}]", layer.kind()), grad_in.data()[i], (up - dn) / (2.0 * FD_STEP));
    }
    for (pi, analytic) in param_grads.iter().enumerate() {
        for j in 0..analytic.len() {
            let orig = layer.params()[pi].value.data()[j];
            layer.params_mut()[pi].value.data_mut()[j] = orig + FD_STEP;
            let up = probe(&layer.forward(input, training)?, &r);
            layer.params_mut()[pi].value.data_mut()[j] = orig - FD_STEP;
            let dn = probe(&layer.forward(input, training)?, &r);
            layer.params_mut()[pi].value.data_mut()[j] = orig;
            let name = layer.params()[pi].name.clone();
            report.record(|| format!("{name}[{j}]"), analytic[j], (up - dn) / (2.0 * FD_STEP));
        }
    }
    Ok(report)
}
