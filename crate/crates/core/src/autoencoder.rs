//! Channel-compressing convolutional autoencoders.
//!
//! Every block is a width-preserving conv, a tanh, then a 2x max pool and a
//! 2x nearest upsample, so only the channel count changes. The encoder runs
//! `in -> ceil((in + code) / 2) -> code`; the decoder mirrors it and ends
//! with a linear conv back to `in` channels.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    epoch_batches, mse_grad, mse_loss, parameter_count, zero_grads, Activation, Adam, AdamConfig, Checkpoint,
    Conv1d, ConvSpec, Layer, MaxPool1d, Param, Sequential, Tensor, Upsample,
};

pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub code_channels: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Stop once the mean loss of the latest 10 epochs improves on the
    /// previous 10 by less than this.
    pub min_improvement: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            code_channels: 5,
            max_epochs: 200,
            lr: 1e-3,
            batch_size: 64,
            min_improvement: 1e-6,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_channels == 0 || self.batch_size == 0 {
            return Err(Error::invalid("autoencoder code_channels and batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.min_improvement.is_nan() {
            return Err(Error::invalid("autoencoder lr must be positive"));
        }
        Ok(())
    }
}

const PLATEAU_SPAN: usize = 10;

pub struct AutoencoderModel {
    pub in_channels: usize,
    pub code_channels: usize,
    pub width: usize,
    pub encoder: Sequential,
    pub decoder: Sequential,
    name: String,
}

pub fn channel_schedule(in_channels: usize, code_channels: usize) -> [usize; 3] {
    [in_channels, (in_channels + code_channels).div_ceil(2), code_channels]
}

fn block(name: &str, ci: usize, co: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Box<dyn Layer>>> {
    Ok(vec![
        Box::new(Conv1d::new(name, ConvSpec::same(ci, co, KERNEL), rng)?),
        Box::new(Activation::tanh()),
        Box::new(MaxPool1d::new(2, 2)),
        Box::new(Upsample::new(2)),
    ])
}

/// Builds a seeded autoencoder. `name` prefixes every parameter.
pub fn build_autoencoder(
    name: &str,
    in_channels: usize,
    code_channels: usize,
    width: usize,
    seed: u64,
) -> Result<AutoencoderModel> {
    if code_channels == 0 || code_channels >= in_channels {
        return Err(Error::invalid(format!(
            "code channels must satisfy 1 <= code < in, got code {code_channels} for {in_channels} inputs"
        )));
    }
    if width < 2 || !width.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "autoencoder width {width} must be even for the 2x pool; pick an even window"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = channel_schedule(in_channels, code_channels);
    let mut enc = Vec::new();
    for i in 0..2 {
        enc.extend(block(&format!("{name}.enc{i}"), ch[i], ch[i + 1], &mut rng)?);
    }
    let mut dec = Vec::new();
    for i in 0..2 {
        dec.extend(block(&format!("{name}.dec{i}"), ch[2 - i], ch[1 - i], &mut rng)?);
    }
    dec.push(Box::new(Conv1d::new(
        &format!("{name}.conv_f"),
        ConvSpec::same(in_channels, in_channels, KERNEL),
        &mut rng,
    )?));
    Ok(AutoencoderModel {
        in_channels,
        code_channels,
        width,
        encoder: Sequential::new(enc),
        decoder: Sequential::new(dec),
        name: name.to_string(),
    })
}

impl AutoencoderModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    fn check_input(&self, batch: &Tensor) -> Result<()> {
        match batch.shape() {
            [_, c, 1, w] if *c == self.in_channels && *w == self.width => Ok(()),
            other => Err(Error::shape(format!(
                "autoencoder `{}` expects [N, {}, 1, {}], got {other:?}",
                self.name, self.in_channels, self.width
            ))),
        }
    }

    pub fn encode(&mut self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        self.encoder.forward(batch, false)
    }

    pub fn reconstruct(&mut self, batch: &Tensor) -> Result<Tensor> {
        self.check_input(batch)?;
        let code = self.encoder.forward(batch, false)?;
        self.decoder.forward(&code, false)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }

    /// `(encoder, decoder)` parameter counts.
    pub fn parameter_counts(&self) -> (usize, usize) {
        (
            parameter_count(&self.encoder.params()),
            parameter_count(&self.decoder.params()),
        )
    }

    pub fn to_checkpoint(&self, mut meta: BTreeMap<String, String>) -> Checkpoint {
        meta.insert("model".into(), "autoencoder".into());
        meta.insert("name".into(), self.name.clone());
        meta.insert("in_channels".into(), self.in_channels.to_string());
        meta.insert("code_channels".into(), self.code_channels.to_string());
        meta.insert("width".into(), self.width.to_string());
        Checkpoint::from_params(meta, &self.params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ckpt.meta
                .get(k)
                .ok_or_else(|| Error::Format(format!("autoencoder checkpoint lacks `{k}`")))
        };
        if get("model")? != "autoencoder" {
            return Err(Error::Format("checkpoint is not an autoencoder".into()));
        }
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("bad `{k}` in autoencoder checkpoint")))
        };
        let mut model = build_autoencoder(get("name")?, num("in_channels")?, num("code_channels")?, num("width")?, 0)?;
        ckpt.restore(&mut model.params_mut())?;
        Ok(model)
    }
}

/// Trains on `data` (`[N, in, 1, width]`) with MSE and Adam. Returns the
/// per-epoch mean reconstruction loss.
pub fn train_autoencoder(model: &mut AutoencoderModel, data: &Tensor, cfg: &AutoencoderConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    model.check_input(data)?;
    let n = data.dim(0);
    if n == 0 {
        return Err(Error::InsufficientData("autoencoder training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut total = 0.0;
        for idx in epoch_batches(n, cfg.batch_size, &mut rng) {
            let x = data.gather_outer(&idx)?;
            zero_grads(&mut model.params_mut());
            let code = model.encoder.forward(&x, true)?;
            let out = model.decoder.forward(&code, true)?;
            let loss = mse_loss(&out, &x)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "autoencoder `{}` loss diverged at epoch {epoch}",
                    model.name
                )));
            }
            total += loss * idx.len() as f64;
            let g = mse_grad(&out, &x)?;
            let g = model.decoder.backward(&g)?;
            model.encoder.backward(&g)?;
            opt.step(&mut model.params_mut())?;
        }
        history.push(total / n as f64);
        if plateaued(&history, cfg.min_improvement) {
            log::debug!("autoencoder `{}` plateaued after {} epochs", model.name, epoch + 1);
            break;
        }
    }
    Ok(history)
}

fn plateaued(history: &[f64], min_improvement: f64) -> bool {
    let len = history.len();
    if len < 2 * PLATEAU_SPAN {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let prev = mean(&history[len - 2 * PLATEAU_SPAN..len - PLATEAU_SPAN]);
    let last = mean(&history[len - PLATEAU_SPAN..]);
    prev - last < min_improvement
}
