// Raw indicator kernels over plain slices. `None` marks warm-up rows.

pub(crate) fn sma(values: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if window == 0 || values.len() < window {
        return out;
    }
    for i in window - 1..values.len() {
        // Summed fresh per window so every row is a pure function of its slice.
        let s: f64 = values[i + 1 - window..=i].iter().sum();
        out[i] = Some(s / window as f64);
    }
    out
}

/// EMA seeded with the SMA of the first `window` values, `k = 2 / (w + 1)`.
pub(crate) fn ema(values: &[f64], window: usize) -> Vec<Option<f64>> {
    ema_from(values, window, 0)
}

/// EMA over `values[start..]`, writing into positions of the full slice.
fn ema_from(values: &[f64], window: usize, start: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() < start + window {
        return out;
    }
    let k = 2.0 / (window as f64 + 1.0);
    let seed_end = start + window - 1;
    let mut prev = values[start..=seed_end].iter().sum::<f64>() / window as f64;
    out[seed_end] = Some(prev);
    for i in seed_end + 1..values.len() {
        prev = k * values[i] + (1.0 - k) * prev;
        out[i] = Some(prev);
    }
    out
}

pub(crate) fn wma(values: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() < window {
        return out;
    }
    let denom = (window * (window + 1) / 2) as f64;
    for i in window - 1..values.len() {
        let s: f64 = values[i + 1 - window..=i]
            .iter()
            .enumerate()
            .map(|(j, v)| (j + 1) as f64 * v)
            .sum();
        out[i] = Some(s / denom);
    }
    out
}

/// MACD histogram: (EMA fast - EMA slow) minus its `signal`-period EMA.
pub(crate) fn macd_histogram(
    values: &[f64],
    fast: usize,
    slow: usize,
    signal: usize,
) -> Vec<Option<f64>> {
    let f = ema(values, fast);
    let s = ema(values, slow);
    let line: Vec<f64> = f
        .iter()
        .zip(&s)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => a - b,
            _ => 0.0,
        })
        .collect();
    let sig = ema_from(&line, signal, slow - 1);
    line.iter()
        .zip(&sig)
        .map(|(l, s)| s.map(|s| l - s))
        .collect()
}

/// Wilder RSI. Flat history (no gains, no losses) reads 50.
pub(crate) fn rsi(values: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() <= window {
        return out;
    }
    let (mut gain, mut loss) = (0.0, 0.0);
    for i in 1..=window {
        let d = values[i] - values[i - 1];
        if d > 0.0 {
            gain += d;
        } else {
            loss -= d;
        }
    }
    let w = window as f64;
    gain /= w;
    loss /= w;
    out[window] = Some(rsi_value(gain, loss));
    for i in window + 1..values.len() {
        let d = values[i] - values[i - 1];
        gain = (gain * (w - 1.0) + d.max(0.0)) / w;
        loss = (loss * (w - 1.0) + (-d).max(0.0)) / w;
        out[i] = Some(rsi_value(gain, loss));
    }
    out
}

fn rsi_value(gain: f64, loss: f64) -> f64 {
    if loss == 0.0 {
        if gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + gain / loss)
    }
}

fn rolling_extrema(high: &[f64], low: &[f64], i: usize, window: usize) -> (f64, f64) {
    let hh = high[i + 1 - window..=i]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let ll = low[i + 1 - window..=i]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    (hh, ll)
}

/// Stochastic %K in [0, 100]; a flat range reads 50.
pub(crate) fn stochastic_k(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; close.len()];
    if close.len() < window {
        return out;
    }
    for i in window - 1..close.len() {
        let (hh, ll) = rolling_extrema(high, low, i, window);
        let range = hh - ll;
        out[i] = Some(if range > 0.0 {
            (100.0 * (close[i] - ll) / range).clamp(0.0, 100.0)
        } else {
            50.0
        });
    }
    out
}

/// Stochastic %D: 3-period SMA of %K.
pub(crate) fn stochastic_d(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Vec<Option<f64>> {
    let k = stochastic_k(high, low, close, window);
    let mut out = vec![None; close.len()];
    for i in 0..close.len() {
        if i >= 2 {
            if let (Some(a), Some(b), Some(c)) = (k[i - 2], k[i - 1], k[i]) {
                out[i] = Some((a + b + c) / 3.0);
            }
        }
    }
    out
}

/// Williams %R in [-100, 0]; a flat range reads -50.
pub(crate) fn williams_r(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; close.len()];
    if close.len() < window {
        return out;
    }
    for i in window - 1..close.len() {
        let (hh, ll) = rolling_extrema(high, low, i, window);
        let range = hh - ll;
        out[i] = Some(if range > 0.0 {
            (-100.0 * (hh - close[i]) / range).clamp(-100.0, 0.0)
        } else {
            -50.0
        });
    }
    out
}

/// Commodity channel index on the typical price with the 0.015 constant.
pub(crate) fn cci(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Vec<Option<f64>> {
    let tp: Vec<f64> = (0..close.len())
        .map(|i| (high[i] + low[i] + close[i]) / 3.0)
        .collect();
    let mut out = vec![None; close.len()];
    if close.len() < window {
        return out;
    }
    for i in window - 1..close.len() {
        let slice = &tp[i + 1 - window..=i];
        let mean = slice.iter().sum::<f64>() / window as f64;
        let mean_dev = slice.iter().map(|v| (v - mean).abs()).sum::<f64>() / window as f64;
        out[i] = Some(if mean_dev > 0.0 {
            (tp[i] - mean) / (0.015 * mean_dev)
        } else {
            0.0
        });
    }
    out
}

/// Wilder ATR seeded with the mean of the first `window` true ranges.
pub(crate) fn atr(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Vec<Option<f64>> {
    let n = close.len();
    let mut out = vec![None; n];
    if n < window {
        return out;
    }
    let tr: Vec<f64> = (0..n)
        .map(|i| {
            let hl = high[i] - low[i];
            if i == 0 {
                hl
            } else {
                hl.max((high[i] - close[i - 1]).abs())
                    .max((low[i] - close[i - 1]).abs())
            }
        })
        .collect();
    let w = window as f64;
    let mut prev = tr[..window].iter().sum::<f64>() / w;
    out[window - 1] = Some(prev);
    for i in window..n {
        prev = (prev * (w - 1.0) + tr[i]) / w;
        out[i] = Some(prev);
    }
    out
}

pub(crate) fn roc(values: &[f64], window: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| (i >= window).then(|| 100.0 * (values[i] - values[i - window]) / values[i - window]))
        .collect()
}

pub(crate) fn momentum(values: &[f64], window: usize) -> Vec<Option<f64>> {
    (0..values.len())
        .map(|i| (i >= window).then(|| values[i] - values[i - window]))
        .collect()
}

/// Bollinger band `SMA ± k·σ` with population standard deviation.
pub(crate) fn bollinger(values: &[f64], window: usize, k: f64, upper: bool) -> Vec<Option<f64>> {
    let mut out = vec![None; values.len()];
    if values.len() < window {
        return out;
    }
    for i in window - 1..values.len() {
        let slice = &values[i + 1 - window..=i];
        let mean = slice.iter().sum::<f64>() / window as f64;
        let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64;
        let band = k * var.sqrt();
        out[i] = Some(if upper { mean + band } else { mean - band });
    }
    out
}

/// On-balance volume starting at 0 on the first candle.
pub(crate) fn obv(close: &[f64], volume: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(close.len());
    let mut acc = 0.0;
    for i in 0..close.len() {
        if i > 0 {
            if close[i] > close[i - 1] {
                acc += volume[i];
            } else if close[i] < close[i - 1] {
                acc -= volume[i];
            }
        }
        out.push(Some(acc));
    }
    out
}
