//! Affine layers, dropout and elementwise activations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Layer, Param, Tensor};
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

pub fn tanh_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn relu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| relu(v)).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `W x + b` for `W: [out, in]`.
pub fn dense(input: &[f64], weight: &Tensor, bias: &[f64]) -> Result<Vec<f64>> {
    let [out, inp] = weight.shape() else {
        return Err(Error::shape(format!("dense weight must be 2-d, got {:?}", weight.shape())));
    };
    if input.len() != *inp || bias.len() != *out {
        return Err(Error::shape(format!(
            "dense {inp}->{out} given input {} and bias {}",
            input.len(),
            bias.len()
        )));
    }
    Ok(weight
        .data()
        .chunks_exact(*inp)
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect())
}

/// Inverted dropout: zero with probability `rate`, scale survivors by `1/(1-rate)`.
pub fn dropout(input: &[f64], rate: f64, seed: u64, training: bool) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(input.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = dropout_mask(input.len(), rate, &mut rng);
    Ok(input.iter().zip(mask).map(|(x, m)| x * m).collect())
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::xavier(format!("{name}.weight"), &[outputs, inputs], inputs, outputs, rng),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[outputs])),
            cache: None,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.value.dim(1), self.weight.value.dim(0))
    }
}

impl Layer for Dense {
    fn kind(&self) -> &'static str {
        "dense"
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let (inp, out) = self.dims();
        let [n, f] = input.shape() else {
            return Err(Error::shape(format!("dense expects [N, {inp}], got {:?}", input.shape())));
        };
        if *f != inp {
            return Err(Error::shape(format!("dense expects [N, {inp}], got {:?}", input.shape())));
        }
        let mut data = Vec::with_capacity(n * out);
        for row in input.data().chunks_exact(inp) {
            data.extend(dense(row, &self.weight.value, self.bias.value.data())?);
        }
        self.cache = Some(input.clone());
        Tensor::new(vec![*n, out], data)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.cache.take().ok_or(Error::BackwardBeforeForward("dense"))?;
        let (inp, out) = self.dims();
        let n = input.dim(0);
        grad_output.expect_shape(&[n, out], "dense grad")?;
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let mut gx = vec![0.0; n * inp];
        for s in 0..n {
            let x = &input.data()[s * inp..][..inp];
            let g = &grad_output.data()[s * out..][..out];
            let gxs = &mut gx[s * inp..][..inp];
            for (o, &go) in g.iter().enumerate() {
                gb[o] += go;
                let wrow = &w[o * inp..][..inp];
                let gwrow = &mut gw[o * inp..][..inp];
                for j in 0..inp {
                    gwrow[j] += go * x[j];
                    gxs[j] += go * wrow[j];
                }
            }
        }
        Tensor::new(vec![n, inp], gx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let (inp, out) = self.dims();
        match input {
            [n, f] if *f == inp => Ok(vec![*n, out]),
            other => Err(Error::shape(format!("dense {inp}->{out} cannot take {other:?}"))),
        }
    }
}

/// Dropout layer with its own seeded stream; each training forward draws a
/// fresh mask.
pub struct Dropout {
    pub rate: f64,
    rng: ChaCha8Rng,
    cache: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cache: None,
        })
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, input: &Tensor, training: bool) -> Result<Tensor> {
        let mask = if training && self.rate > 0.0 {
            dropout_mask(input.len(), self.rate, &mut self.rng)
        } else {
            vec![1.0; input.len()]
        };
        let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.cache = Some(mask);
        Tensor::new(input.shape().to_vec(), data)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mask = self.cache.take().ok_or(Error::BackwardBeforeForward("dropout"))?;
        if mask.len() != grad_output.len() {
            return Err(Error::shape("dropout grad does not match forward output"));
        }
        let data = grad_output.data().iter().zip(&mask).map(|(g, m)| g * m).collect();
        Tensor::new(grad_output.shape().to_vec(), data)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Tanh,
    Sigmoid,
}

/// Elementwise activation; caches what its derivative needs.
pub struct Activation {
    pub act: ActivationKind,
    cache: Option<Tensor>,
}

impl Activation {
    pub fn new(act: ActivationKind) -> Self {
        Self { act, cache: None }
    }

    pub fn relu() -> Self {
        Self::new(ActivationKind::Relu)
    }

    pub fn tanh() -> Self {
        Self::new(ActivationKind::Tanh)
    }

    pub fn sigmoid() -> Self {
        Self::new(ActivationKind::Sigmoid)
    }
}

impl Layer for Activation {
    fn kind(&self) -> &'static str {
        match self.act {
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
        }
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let out = match self.act {
            // ReLU caches its input; the others cache their output.
            ActivationKind::Relu => {
                self.cache = Some(input.clone());
                return Ok(input.map(relu));
            }
            ActivationKind::Tanh => input.map(f64::tanh),
            ActivationKind::Sigmoid => input.map(sigmoid),
        };
        self.cache = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cached = self.cache.take().ok_or(Error::BackwardBeforeForward("activation"))?;
        if cached.shape() != grad_output.shape() {
            return Err(Error::shape("activation grad does not match forward output"));
        }
        let deriv: fn(f64) -> f64 = match self.act {
            ActivationKind::Relu => |x| if x > 0.0 { 1.0 } else { 0.0 },
            ActivationKind::Tanh => |y| 1.0 - y * y,
            ActivationKind::Sigmoid => |y| y * (1.0 - y),
        };
        let data = grad_output
            .data()
            .iter()
            .zip(cached.data())
            .map(|(g, c)| g * deriv(*c))
            .collect();
        Tensor::new(cached.shape().to_vec(), data)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        Ok(input.to_vec())
    }
}
