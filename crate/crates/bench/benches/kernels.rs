use std::hint::black_box;

use candlenet::denoise::{denoise_column, DenoiseMode, WaveletConfig};
use candlenet::feature_select::{fit_gbdt, FeatureMatrix, GbdtConfig};
use candlenet::nn::{Conv1d, ConvSpec, Layer, Lstm, Tensor};
use candlenet::strategy::{instances_from_path, run_backtest, StrategyConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut layer = Conv1d::new("c", ConvSpec::same(8, 8, 3), &mut rng).unwrap();
    let x = random(&[64, 8, 1, 24], &mut rng);
    let g = random(&[64, 8, 1, 24], &mut rng);
    c.bench_function("conv1d forward+backward 64x8x24", |b| {
        b.iter(|| {
            layer.forward(black_box(&x), true).unwrap();
            layer.backward(black_box(&g)).unwrap()
        })
    });
}

fn lstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut layer = Lstm::new("l", 24, 20, &mut rng);
    let x = random(&[64, 8, 24], &mut rng);
    let g = random(&[64, 20], &mut rng);
    c.bench_function("lstm forward+backward 64x8x24 -> 20", |b| {
        b.iter(|| {
            layer.forward(black_box(&x), true).unwrap();
            layer.backward(black_box(&g)).unwrap()
        })
    });
}

fn wavelet(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let global = WaveletConfig::default();
    let causal = WaveletConfig { mode: DenoiseMode::Causal, lookback: Some(128), ..WaveletConfig::default() };
    c.bench_function("denoise 4000 global", |b| b.iter(|| denoise_column(black_box(&x), &global).unwrap()));
    c.bench_function("denoise 4000 causal lookback 128", |b| b.iter(|| denoise_column(black_box(&x), &causal).unwrap()));
}

fn gbdt(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, cols) = (3000, 60);
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<f64> = (0..rows).map(|r| f64::from(values[r * cols] + values[r * cols + 1] > 0.0)).collect();
    let names = (0..cols).map(|i| format!("f{i}")).collect();
    let x = FeatureMatrix::new(names, rows, values).unwrap();
    let cfg = GbdtConfig { rounds: 20, ..GbdtConfig::default() };
    let mut group = c.benchmark_group("gbdt");
    group.sample_size(10);
    group.bench_function("fit 3000x60, 20 rounds", |b| b.iter(|| fit_gbdt(black_box(&x), &labels, &cfg).unwrap()));
    group.finish();
}

fn backtest(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let mut closes = vec![100.0];
    for _ in 0..n {
        let last = *closes.last().unwrap();
        closes.push(last * (1.0 + rng.random_range(-0.01..0.01)));
    }
    let sigmas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let inst = instances_from_path(&sigmas, &closes).unwrap();
    let cfg = StrategyConfig { theta: 1.0 / 3.0, fee_rate: 0.001, profit_saving: true, initial_margin: 1000.0 };
    c.bench_function("backtest 10k instances", |b| b.iter(|| run_backtest(black_box(&inst), &cfg).unwrap()));
}

criterion_group!(benches, conv, lstm, wavelet, gbdt, backtest);
criterion_main!(benches);
