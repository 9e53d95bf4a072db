//! Layered pipeline configuration.
//!
//! Built-in defaults are overlaid by a TOML file and then by `key=value`
//! overrides addressed with dotted paths (`train.max_epochs=300`).

use std::path::{Path, PathBuf};

use candlenet::autoencoder::AutoencoderConfig;
use candlenet::classifier::ClassifierConfig;
use candlenet::denoise::{DenoiseMode, WaveletConfig, WaveletFamily};
use candlenet::feature_select::GbdtConfig;
use candlenet::indicators::{IndicatorKind, IndicatorSpec};
use candlenet::market_data::GapPolicy;
use candlenet::trainer::TrainConfig;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds model initialisation; `train.seed` drives batch order.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Empty means derive from the config hash.
    pub run_id: String,
    pub data: DataConfig,
    pub indicators: IndicatorConfig,
    pub wavelet: DenoiseConfig,
    pub gbdt: GbdtConfig,
    pub dataset: WindowConfig,
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub strategy: StrategySection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            out_dir: PathBuf::from("out"),
            run_id: String::new(),
            data: DataConfig::default(),
            indicators: IndicatorConfig::default(),
            wavelet: DenoiseConfig::default(),
            gbdt: GbdtConfig::default(),
            dataset: WindowConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            classifier: ClassifierConfig::default(),
            train: TrainConfig::default(),
            strategy: StrategySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub timeframe: i64,
    pub gaps: GapPolicy,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/synthetic_sine_4h.csv"),
            timeframe: 14_400,
            gaps: GapPolicy::Reject,
            test_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub kinds: Vec<IndicatorKind>,
    pub windows: Vec<usize>,
    /// `[fast, slow, signal]`; empty disables MACD.
    pub macd: Vec<usize>,
    /// Zero disables the bands.
    pub bollinger_window: usize,
    pub bollinger_width: f64,
    pub obv: bool,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            kinds: IndicatorKind::WINDOWED.to_vec(),
            windows: candlenet::indicators::DEFAULT_WINDOWS.to_vec(),
            macd: vec![12, 26, 9],
            bollinger_window: 20,
            bollinger_width: 2.0,
            obv: true,
        }
    }
}

impl IndicatorConfig {
    pub fn grid(&self) -> Result<Vec<IndicatorSpec>, CliError> {
        let mut grid = Vec::new();
        for &k in &self.kinds {
            if !IndicatorKind::WINDOWED.contains(&k) {
                return Err(CliError::Config(format!(
                    "indicators.kinds lists {k:?}, which is configured by its own key"
                )));
            }
            grid.extend(self.windows.iter().map(|&w| IndicatorSpec::windowed(k, w)));
        }
        match self.macd[..] {
            [] => {}
            [f, s, g] => grid.push(IndicatorSpec::macd(f, s, g)),
            _ => return Err(CliError::Config("indicators.macd must be [fast, slow, signal] or []".into())),
        }
        if self.bollinger_window > 0 {
            grid.push(IndicatorSpec::bollinger(true, self.bollinger_window, self.bollinger_width));
            grid.push(IndicatorSpec::bollinger(false, self.bollinger_window, self.bollinger_width));
        }
        if self.obv {
            grid.push(IndicatorSpec::obv());
        }
        for spec in &grid {
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if grid.is_empty() {
            return Err(CliError::Config("indicator grid is empty".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    pub family: WaveletFamily,
    pub levels: usize,
    pub mode: DenoiseMode,
    /// Causal mode: trailing candles per step (0 = the whole prefix).
    pub lookback: usize,
    /// Also denoise open/high/low/close; volume is never denoised.
    pub denoise_ohlcv: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        let w = WaveletConfig::default();
        Self {
            family: w.family,
            levels: w.levels,
            mode: w.mode,
            lookback: 0,
            denoise_ohlcv: true,
        }
    }
}

impl DenoiseConfig {
    pub fn wavelet(&self) -> WaveletConfig {
        WaveletConfig {
            family: self.family,
            levels: self.levels,
            mode: self.mode,
            lookback: (self.lookback > 0).then_some(self.lookback),
            ..WaveletConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { window: 24, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    /// Risk/reward ratios; accepts numbers or `"a/b"` strings.
    #[serde(deserialize_with = "ratios")]
    pub thetas: Vec<f64>,
    pub fee_rate: f64,
    pub initial_margin: f64,
    /// Account the per-trade ledger follows.
    pub profit_saving: bool,
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            thetas: vec![1.0 / 3.0, 0.25, 1.0],
            fee_rate: 0.001,
            initial_margin: 1000.0,
            profit_saving: true,
        }
    }
}

pub fn parse_ratio(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad ratio `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad ratio `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| format!("bad ratio `{s}`"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("ratio `{s}` is not finite"))
    }
}

fn ratios<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ratio {
        Num(f64),
        Text(String),
    }
    Vec::<Ratio>::deserialize(d)?
        .into_iter()
        .map(|r| match r {
            Ratio::Num(v) => Ok(v),
            Ratio::Text(s) => parse_ratio(&s).map_err(serde::de::Error::custom),
        })
        .collect()
}

impl PipelineConfig {
    /// Defaults, then the optional file, then each `key=value` override.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: candlenet::Error| CliError::Config(e.to_string());
        if self.data.timeframe <= 0 {
            return Err(CliError::Config("data.timeframe must be positive seconds".into()));
        }
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(CliError::Config("data.test_fraction must lie in (0, 1)".into()));
        }
        self.indicators.grid()?;
        self.wavelet.wavelet().validate().map_err(cfg)?;
        self.gbdt.validate().map_err(cfg)?;
        if self.dataset.window == 0 || self.dataset.stride == 0 {
            return Err(CliError::Config("dataset.window and dataset.stride must be >= 1".into()));
        }
        if !self.dataset.window.is_multiple_of(6) {
            return Err(CliError::Config(format!(
                "dataset.window {} must be a multiple of 6 (2x autoencoder pooling, 3x classifier pooling); 24 works",
                self.dataset.window
            )));
        }
        self.autoencoder.validate().map_err(cfg)?;
        self.classifier.validate().map_err(cfg)?;
        self.train.validate().map_err(cfg)?;
        if self.strategy.thetas.is_empty() {
            return Err(CliError::Config("strategy.thetas must not be empty".into()));
        }
        for &theta in &self.strategy.thetas {
            candlenet::strategy::StrategyConfig {
                theta,
                fee_rate: self.strategy.fee_rate,
                profit_saving: self.strategy.profit_saving,
                initial_margin: self.strategy.initial_margin,
            }
            .validate()
            .map_err(cfg)?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Hash of everything the prepare stage reads.
    pub fn prepare_hash(&self) -> String {
        digest(&[
            ("seed", &self.seed.to_string()),
            ("data", &json(&self.data)),
            ("indicators", &json(&self.indicators)),
            ("wavelet", &json(&self.wavelet)),
            ("gbdt", &json(&self.gbdt)),
            ("dataset", &json(&self.dataset)),
            ("autoencoder", &json(&self.autoencoder)),
        ])
    }

    /// Hash of everything the train stage reads, chained on prepare.
    pub fn train_hash(&self) -> String {
        digest(&[
            ("prepare", &self.prepare_hash()),
            ("classifier", &json(&self.classifier)),
            ("train", &json(&self.train)),
        ])
    }

    pub fn run_id(&self) -> String {
        if self.run_id.is_empty() {
            self.train_hash()[..12].to_string()
        } else {
            self.run_id.clone()
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_id())
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serialises")
}

fn digest(parts: &[(&str, &str)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in parts {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    // TOML literal if it parses as one, else a bare string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let mut node = table;
    for part in &path[..path.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}` descends into a non-table")))?;
    }
    node.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
