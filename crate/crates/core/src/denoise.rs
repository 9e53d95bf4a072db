//! Discrete wavelet denoising with soft universal thresholding.
//!
//! The transform is the periodised orthonormal DWT. A level whose input has
//! odd length is first extended by one half-sample-symmetric value (the last
//! sample repeated), so a pyramid holds `len + extensions` coefficients and
//! inverts exactly.
//!
//! Denoising mirrors the column (`x ++ reverse(x)`) and tiles it until the
//! length divides `2^levels`. That symmetric periodic signal has no jump at
//! either end, and projecting the reconstruction back onto symmetric
//! signals keeps the output norm at or below the input norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    Haar,
    /// Four-tap Daubechies filter with two vanishing moments.
    Daubechies4,
}

impl WaveletFamily {
    fn lowpass(self) -> Vec<f64> {
        match self {
            WaveletFamily::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFamily::Daubechies4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * 2f64.sqrt();
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
        }
    }

    /// Quadrature mirror: `g[k] = (-1)^k h[L-1-k]`.
    fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|k| if k % 2 == 0 { h[n - 1 - k] } else { -h[n - 1 - k] })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Thresholding {
    #[default]
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMode {
    /// Whole-column transform; every output sees the full column.
    #[default]
    Global,
    /// Output `t` is the last value of denoising `values[..=t]`.
    Causal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletConfig {
    pub family: WaveletFamily,
    pub levels: usize,
    #[serde(default)]
    pub thresholding: Thresholding,
    #[serde(default)]
    pub mode: DenoiseMode,
    /// Causal mode only: cap on the trailing history per step.
    #[serde(default)]
    pub lookback: Option<usize>,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            family: WaveletFamily::Daubechies4,
            levels: 2,
            thresholding: Thresholding::Soft,
            mode: DenoiseMode::Global,
            lookback: None,
        }
    }
}

impl WaveletConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::invalid("wavelet levels must be at least 1"));
        }
        if let Some(lb) = self.lookback {
            if lb < 1 << self.levels {
                return Err(Error::invalid(format!(
                    "wavelet lookback {lb} shorter than 2^levels = {}",
                    1 << self.levels
                )));
            }
        }
        Ok(())
    }
}

/// Coefficients of a multi-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    pub family: WaveletFamily,
    /// Coarsest approximation.
    pub approximation: Vec<f64>,
    /// Detail bands, finest first.
    pub details: Vec<Vec<f64>>,
    /// Length of the input to each level before extension, finest first.
    pub lengths: Vec<usize>,
}

impl WaveletPyramid {
    pub fn coefficient_count(&self) -> usize {
        self.approximation.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    /// Number of levels whose input needed a one-sample extension.
    pub fn extensions(&self) -> usize {
        self.lengths.iter().filter(|&&n| n % 2 == 1).count()
    }
}

fn check_length(len: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("wavelet levels must be at least 1"));
    }
    if levels >= usize::BITS as usize || len < 1 << levels {
        return Err(Error::InsufficientData(format!(
            "signal of length {len} too short for {levels} wavelet levels"
        )));
    }
    Ok(())
}

pub fn dwt_forward(signal: &[f64], family: WaveletFamily, levels: usize) -> Result<WaveletPyramid> {
    check_length(signal.len(), levels)?;
    let h = family.lowpass();
    let g = family.highpass();
    let mut current = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    let mut lengths = Vec::with_capacity(levels);
    for _ in 0..levels {
        lengths.push(current.len());
        if current.len() % 2 == 1 {
            current.push(*current.last().expect("non-empty"));
        }
        let n = current.len();
        let half = n / 2;
        let mut approx = vec![0.0; half];
        let mut detail = vec![0.0; half];
        for i in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for k in 0..h.len() {
                let x = current[(2 * i + k) % n];
                a += h[k] * x;
                d += g[k] * x;
            }
            approx[i] = a;
            detail[i] = d;
        }
        details.push(detail);
        current = approx;
    }
    Ok(WaveletPyramid {
        family,
        approximation: current,
        details,
        lengths,
    })
}

pub fn dwt_inverse(pyramid: &WaveletPyramid) -> Result<Vec<f64>> {
    if pyramid.details.len() != pyramid.lengths.len() || pyramid.details.is_empty() {
        return Err(Error::Format("inconsistent wavelet pyramid".into()));
    }
    let h = pyramid.family.lowpass();
    let g = pyramid.family.highpass();
    let mut current = pyramid.approximation.clone();
    for (detail, &len) in pyramid.details.iter().zip(&pyramid.lengths).rev() {
        if detail.len() != current.len() || detail.len() != len.div_ceil(2) {
            return Err(Error::Format(format!(
                "wavelet band of {} coefficients does not match level length {len}",
                detail.len()
            )));
        }
        let half = current.len();
        let n = 2 * half;
        let mut out = vec![0.0; n];
        for i in 0..half {
            for k in 0..h.len() {
                out[(2 * i + k) % n] += h[k] * current[i] + g[k] * detail[i];
            }
        }
        out.truncate(len);
        current = out;
    }
    Ok(current)
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

fn soft(x: f64, threshold: f64) -> f64 {
    x.signum() * (x.abs() - threshold).max(0.0)
}

/// Universal threshold `σ̂·√(2 ln n)` with `σ̂ = median(|finest details|) / 0.6745`.
pub fn universal_threshold(finest: &[f64], n: usize) -> f64 {
    let mut abs: Vec<f64> = finest.iter().map(|d| d.abs()).collect();
    let sigma = median(&mut abs) / 0.6745;
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

pub fn denoise_column(values: &[f64], cfg: &WaveletConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_length(values.len(), cfg.levels)?;
    match cfg.mode {
        DenoiseMode::Global => denoise_global(values, cfg.family, cfg.levels),
        DenoiseMode::Causal => {
            let min_len = 1 << cfg.levels;
            let mut out = Vec::with_capacity(values.len());
            for t in 0..values.len() {
                if t + 1 < min_len {
                    out.push(values[t]);
                    continue;
                }
                let start = cfg.lookback.map_or(0, |lb| (t + 1).saturating_sub(lb));
                let prefix = denoise_global(&values[start..=t], cfg.family, cfg.levels)?;
                out.push(*prefix.last().expect("non-empty"));
            }
            Ok(out)
        }
    }
}

fn denoise_global(values: &[f64], family: WaveletFamily, levels: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let period = 2 * n;
    let copies = 1usize << (levels - 1);
    let mut extended = Vec::with_capacity(period * copies);
    for _ in 0..copies {
        extended.extend_from_slice(values);
        extended.extend(values.iter().rev());
    }
    let mut pyramid = dwt_forward(&extended, family, levels)?;
    let threshold = universal_threshold(&pyramid.details[0], n);
    if threshold > 0.0 {
        for band in &mut pyramid.details {
            for d in band.iter_mut() {
                *d = soft(*d, threshold);
            }
        }
    }
    let rebuilt = dwt_inverse(&pyramid)?;
    // Average every mirrored and periodic copy of each sample.
    let scale = 1.0 / (2 * copies) as f64;
    Ok((0..n)
        .map(|i| {
            let s: f64 = (0..copies)
                .map(|c| rebuilt[c * period + i] + rebuilt[c * period + period - 1 - i])
                .sum();
            s * scale
        })
        .collect())
}
