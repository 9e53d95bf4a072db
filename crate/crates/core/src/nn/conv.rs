//! One-dimensional convolution, max pooling and nearest upsampling over
//! `[N, C, 1, L]` tensors. The height axis is always 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Layer, Param, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Stride 1, dilation 1 and the padding that keeps the width for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel_size: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size,
            stride: 1,
            padding: same_padding(kernel_size, 1),
            dilation: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.dilation == 0 {
            return Err(Error::invalid(format!(
                "conv kernel, stride and dilation must be >= 1: {self:?}"
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid(format!("conv channels must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// `floor((L + 2p - d(k-1) - 1) / s + 1)`; errors when no output position exists.
pub fn conv1d_out_len(spec: &ConvSpec, l_in: usize) -> Result<usize> {
    if spec.stride == 0 || spec.kernel_size == 0 || spec.dilation == 0 {
        return Err(Error::invalid("stride, kernel and dilation must be >= 1"));
    }
    let span = spec.dilation * (spec.kernel_size - 1) + 1;
    let padded = l_in + 2 * spec.padding;
    if padded < span {
        return Err(Error::shape(format!(
            "input length {l_in} with padding {} is shorter than the dilated kernel span {span}",
            spec.padding
        )));
    }
    Ok((padded - span) / spec.stride + 1)
}

/// Padding `d(k-1)/2` that preserves width at stride 1. Exact for odd kernels only.
pub fn same_padding(kernel_size: usize, dilation: usize) -> usize {
    dilation * (kernel_size.saturating_sub(1)) / 2
}

fn as_batch(input: &Tensor, context: &str) -> Result<(usize, usize, usize)> {
    match input.shape() {
        [n, c, 1, l] => Ok((*n, *c, *l)),
        other => Err(Error::shape(format!("{context}: expected [N, C, 1, L], got {other:?}"))),
    }
}

/// Cross-correlation of a `[C_in, 1, L]` or `[N, C_in, 1, L]` input with
/// weights `[C_out, C_in, K]` and bias `[C_out]`.
pub fn conv1d_forward(input: &Tensor, spec: &ConvSpec, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() == 3 {
        let s = input.shape();
        let batched = input.clone().reshape(&[1, s[0], s[1], s[2]])?;
        let out = conv1d_forward(&batched, spec, weight, bias)?;
        let o = out.shape().to_vec();
        return out.reshape(&o[1..]);
    }
    spec.validate()?;
    let (n, c_in, l_in) = as_batch(input, "conv1d input")?;
    if c_in != spec.in_channels {
        return Err(Error::shape(format!(
            "conv1d expects {} input channels, got {c_in}",
            spec.in_channels
        )));
    }
    weight.expect_shape(&[spec.out_channels, spec.in_channels, spec.kernel_size], "conv1d weight")?;
    bias.expect_shape(&[spec.out_channels], "conv1d bias")?;
    let l_out = conv1d_out_len(spec, l_in)?;
    let k = spec.kernel_size;
    let taps: Vec<Option<(usize, usize, usize)>> = (0..k).map(|j| tap_range(spec, j, l_in, l_out)).collect();
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0; n * spec.out_channels * l_out];
    for b in 0..n {
        for o in 0..spec.out_channels {
            let row = &mut out[(b * spec.out_channels + o) * l_out..][..l_out];
            row.fill(bias.data()[o]);
            for i in 0..c_in {
                let xs = &x[(b * c_in + i) * l_in..][..l_in];
                let ws = &w[(o * c_in + i) * k..][..k];
                for (&wv, tap) in ws.iter().zip(&taps) {
                    let Some((lo, hi, start)) = *tap else { continue };
                    let xs = &xs[start..];
                    if spec.stride == 1 {
                        for (acc, xv) in row[lo..hi].iter_mut().zip(xs) {
                            *acc += wv * xv;
                        }
                    } else {
                        for (acc, xv) in row[lo..hi].iter_mut().zip(xs.iter().step_by(spec.stride)) {
                            *acc += wv * xv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, spec.out_channels, 1, l_out], out)
}

/// Output positions `lo..hi` whose tap `j` lands inside the input, and the
/// input index read at `lo`.
fn tap_range(spec: &ConvSpec, j: usize, l_in: usize, l_out: usize) -> Option<(usize, usize, usize)> {
    let (s, p) = (spec.stride, spec.padding);
    let shift = j * spec.dilation;
    // Position t reads input index t*s + shift - p.
    let lo = if p > shift { (p - shift).div_ceil(s) } else { 0 };
    if l_in + p <= shift {
        return None;
    }
    let hi = ((l_in - 1 + p - shift) / s + 1).min(l_out);
    (lo < hi).then(|| (lo, hi, lo * s + shift - p))
}

pub struct Conv1d {
    pub spec: ConvSpec,
    pub weight: Param,
    pub bias: Param,
    cache: Option<Tensor>,
}

impl Conv1d {
    pub fn new(name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let (ci, co, k) = (spec.in_channels, spec.out_channels, spec.kernel_size);
        Ok(Self {
            spec,
            weight: Param::xavier(format!("{name}.weight"), &[co, ci, k], ci * k, co * k, rng),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[co])),
            cache: None,
        })
    }
}

impl Layer for Conv1d {
    fn kind(&self) -> &'static str {
        "conv1d"
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let out = conv1d_forward(input, &self.spec, &self.weight.value, &self.bias.value)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cache
            .take()
            .ok_or(Error::BackwardBeforeForward("conv1d"))?;
        let (n, c_in, l_in) = as_batch(&input, "conv1d cached input")?;
        let spec = self.spec;
        let l_out = conv1d_out_len(&spec, l_in)?;
        grad_output.expect_shape(&[n, spec.out_channels, 1, l_out], "conv1d grad")?;
        let k = spec.kernel_size;
        let st = spec.stride;
        let taps: Vec<Option<(usize, usize, usize)>> = (0..k).map(|j| tap_range(&spec, j, l_in, l_out)).collect();
        let x = input.data();
        let g = grad_output.data();
        let w = self.weight.value.data();
        let gw = self.weight.grad.data_mut();
        let mut gx = vec![0.0; x.len()];
        for b in 0..n {
            for o in 0..spec.out_channels {
                let grow = &g[(b * spec.out_channels + o) * l_out..][..l_out];
                self.bias.grad.data_mut()[o] += grow.iter().sum::<f64>();
                for i in 0..c_in {
                    let xoff = (b * c_in + i) * l_in;
                    let woff = (o * c_in + i) * k;
                    for (j, tap) in taps.iter().enumerate() {
                        let Some((lo, hi, start)) = *tap else { continue };
                        let wv = w[woff + j];
                        let gs = &grow[lo..hi];
                        let xs = &x[xoff + start..xoff + l_in];
                        let gxs = &mut gx[xoff + start..xoff + l_in];
                        let mut acc = 0.0;
                        if st == 1 {
                            for ((gv, xv), gxv) in gs.iter().zip(xs).zip(gxs.iter_mut()) {
                                acc += gv * xv;
                                *gxv += gv * wv;
                            }
                        } else {
                            for ((gv, xv), gxv) in gs.iter().zip(xs.iter().step_by(st)).zip(gxs.iter_mut().step_by(st)) {
                                acc += gv * xv;
                                *gxv += gv * wv;
                            }
                        }
                        gw[woff + j] += acc;
                    }
                }
            }
        }
        Tensor::new(input.shape().to_vec(), gx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n, c, 1, l] if *c == self.spec.in_channels => {
                Ok(vec![*n, self.spec.out_channels, 1, conv1d_out_len(&self.spec, *l)?])
            }
            other => Err(Error::shape(format!(
                "conv1d with {} input channels cannot take {other:?}",
                self.spec.in_channels
            ))),
        }
    }
}

fn pool_out_len(l: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid("pool kernel and stride must be >= 1"));
    }
    if kernel > l {
        return Err(Error::shape(format!("pool kernel {kernel} exceeds width {l}")));
    }
    Ok((l - kernel) / stride + 1)
}

/// Windowed maximum along the width. Returns the output and, per output
/// element, the flat input index of the first maximum.
pub fn maxpool1d(input: &Tensor, kernel: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, l) = as_batch(input, "maxpool1d input")?;
    let l_out = pool_out_len(l, kernel, stride)?;
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * l_out);
    let mut arg = Vec::with_capacity(n * c * l_out);
    for row in 0..n * c {
        let off = row * l;
        for t in 0..l_out {
            let start = off + t * stride;
            let mut best = start;
            for idx in start + 1..start + kernel {
                if x[idx] > x[best] {
                    best = idx;
                }
            }
            out.push(x[best]);
            arg.push(best);
        }
    }
    Ok((Tensor::new(vec![n, c, 1, l_out], out)?, arg))
}

pub struct MaxPool1d {
    pub kernel: usize,
    pub stride: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool1d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        Self {
            kernel,
            stride,
            cache: None,
        }
    }
}

impl Layer for MaxPool1d {
    fn kind(&self) -> &'static str {
        "maxpool1d"
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let (out, arg) = maxpool1d(input, self.kernel, self.stride)?;
        self.cache = Some((input.shape().to_vec(), arg));
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (shape, arg) = self
            .cache
            .take()
            .ok_or(Error::BackwardBeforeForward("maxpool1d"))?;
        if grad_output.len() != arg.len() {
            return Err(Error::shape("maxpool1d grad does not match forward output"));
        }
        let mut gx = Tensor::zeros(&shape);
        let data = gx.data_mut();
        for (g, &i) in grad_output.data().iter().zip(&arg) {
            data[i] += g;
        }
        Ok(gx)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n, c, 1, l] => Ok(vec![*n, *c, 1, pool_out_len(*l, self.kernel, self.stride)?]),
            other => Err(Error::shape(format!("maxpool1d cannot take {other:?}"))),
        }
    }
}

/// Repeats every width position `factor` times.
pub fn upsample_nearest(input: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    let (n, c, l) = as_batch(input, "upsample input")?;
    let mut out = Vec::with_capacity(input.len() * factor);
    for &v in input.data() {
        out.extend(std::iter::repeat_n(v, factor));
    }
    Tensor::new(vec![n, c, 1, l * factor], out)
}

pub struct Upsample {
    pub factor: usize,
    cache: Option<Vec<usize>>,
}

impl Upsample {
    pub fn new(factor: usize) -> Self {
        Self {
            factor,
            cache: None,
        }
    }
}

impl Layer for Upsample {
    fn kind(&self) -> &'static str {
        "upsample"
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let out = upsample_nearest(input, self.factor)?;
        self.cache = Some(input.shape().to_vec());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let shape = self
            .cache
            .take()
            .ok_or(Error::BackwardBeforeForward("upsample"))?;
        let n: usize = shape.iter().product();
        if grad_output.len() != n * self.factor {
            return Err(Error::shape("upsample grad does not match forward output"));
        }
        let data = grad_output
            .data()
            .chunks_exact(self.factor)
            .map(|c| c.iter().sum())
            .collect();
        Tensor::new(shape, data)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n, c, 1, l] => Ok(vec![*n, *c, 1, l * self.factor]),
            other => Err(Error::shape(format!("upsample cannot take {other:?}"))),
        }
    }
}
