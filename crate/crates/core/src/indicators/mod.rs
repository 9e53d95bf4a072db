//! Technical indicator feature generation.
//!
//! Every generated column carries a [`FeatureClass`] tag. Moving averages,
//! Bollinger bands and ATR live in price units and are [`FeatureClass::PriceLike`];
//! oscillators, rates of change, MACD and OBV are [`FeatureClass::NonPriceLike`].

mod kernels;
mod table;

use serde::{Deserialize, Serialize};

pub use table::{FeatureClass, FeatureColumn, FeatureTable};

use crate::error::{Error, Result};
use crate::market_data::CandleSeries;

pub const DEFAULT_WINDOWS: [usize; 5] = [7, 14, 21, 35, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Sma,
    Ema,
    Wma,
    Macd,
    Rsi,
    StochasticK,
    StochasticD,
    Cci,
    Atr,
    BollingerUpper,
    BollingerLower,
    Roc,
    WilliamsR,
    Obv,
    Momentum,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 15] = [
        IndicatorKind::Sma,
        IndicatorKind::Ema,
        IndicatorKind::Wma,
        IndicatorKind::Macd,
        IndicatorKind::Rsi,
        IndicatorKind::StochasticK,
        IndicatorKind::StochasticD,
        IndicatorKind::Cci,
        IndicatorKind::Atr,
        IndicatorKind::BollingerUpper,
        IndicatorKind::BollingerLower,
        IndicatorKind::Roc,
        IndicatorKind::WilliamsR,
        IndicatorKind::Obv,
        IndicatorKind::Momentum,
    ];

    /// Kinds parameterised by a single look-back window.
    pub const WINDOWED: [IndicatorKind; 11] = [
        IndicatorKind::Sma,
        IndicatorKind::Ema,
        IndicatorKind::Wma,
        IndicatorKind::Rsi,
        IndicatorKind::StochasticK,
        IndicatorKind::StochasticD,
        IndicatorKind::Cci,
        IndicatorKind::Atr,
        IndicatorKind::Roc,
        IndicatorKind::WilliamsR,
        IndicatorKind::Momentum,
    ];

    pub fn class(self) -> FeatureClass {
        use IndicatorKind::*;
        match self {
            Sma | Ema | Wma | BollingerUpper | BollingerLower | Atr => FeatureClass::PriceLike,
            Rsi | Cci | StochasticK | StochasticD | WilliamsR | Roc | Macd | Momentum | Obv => {
                FeatureClass::NonPriceLike
            }
        }
    }

    fn prefix(self) -> &'static str {
        use IndicatorKind::*;
        match self {
            Sma => "sma",
            Ema => "ema",
            Wma => "wma",
            Macd => "macd",
            Rsi => "rsi",
            StochasticK => "stoch_k",
            StochasticD => "stoch_d",
            Cci => "cci",
            Atr => "atr",
            BollingerUpper => "bb_upper",
            BollingerLower => "bb_lower",
            Roc => "roc",
            WilliamsR => "williams_r",
            Obv => "obv",
            Momentum => "momentum",
        }
    }
}

/// One indicator with its parameters.
///
/// `window` is used by every kind except MACD (`fast`/`slow`/`signal`)
/// and OBV (no parameters). Bollinger bands also read `band_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub kind: IndicatorKind,
    #[serde(default)]
    pub window: usize,
    #[serde(default)]
    pub fast: usize,
    #[serde(default)]
    pub slow: usize,
    #[serde(default)]
    pub signal: usize,
    #[serde(default)]
    pub band_width: f64,
}

impl IndicatorSpec {
    pub fn windowed(kind: IndicatorKind, window: usize) -> Self {
        Self {
            kind,
            window,
            fast: 0,
            slow: 0,
            signal: 0,
            band_width: 0.0,
        }
    }

    pub fn macd(fast: usize, slow: usize, signal: usize) -> Self {
        Self {
            fast,
            slow,
            signal,
            ..Self::windowed(IndicatorKind::Macd, 0)
        }
    }

    pub fn bollinger(upper: bool, window: usize, band_width: f64) -> Self {
        let kind = if upper {
            IndicatorKind::BollingerUpper
        } else {
            IndicatorKind::BollingerLower
        };
        Self {
            band_width,
            ..Self::windowed(kind, window)
        }
    }

    pub fn obv() -> Self {
        Self::windowed(IndicatorKind::Obv, 0)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            IndicatorKind::Obv => Ok(()),
            IndicatorKind::Macd => {
                if self.fast < 2 || self.signal < 2 || self.fast >= self.slow {
                    Err(Error::invalid(format!(
                        "{}: MACD needs 2 <= fast < slow and signal >= 2",
                        self.name()
                    )))
                } else {
                    Ok(())
                }
            }
            IndicatorKind::BollingerUpper | IndicatorKind::BollingerLower
                if !(self.band_width > 0.0) =>
            {
                Err(Error::invalid(format!("{}: band width must be positive", self.name())))
            }
            _ if self.window < 2 => Err(Error::invalid(format!(
                "{}: window must be at least 2",
                self.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        let p = self.kind.prefix();
        match self.kind {
            IndicatorKind::Obv => p.to_string(),
            IndicatorKind::Macd => format!("{p}_{}_{}_{}", self.fast, self.slow, self.signal),
            IndicatorKind::BollingerUpper | IndicatorKind::BollingerLower => {
                format!("{p}_{}_{}", self.window, self.band_width)
            }
            _ => format!("{p}_{}", self.window),
        }
    }

    /// Leading rows without a value.
    pub fn warm_up(&self) -> usize {
        use IndicatorKind::*;
        match self.kind {
            Obv => 0,
            Macd => self.slow + self.signal - 2,
            Rsi | Roc | Momentum => self.window,
            StochasticD => self.window + 1,
            _ => self.window - 1,
        }
    }
}

/// The fixed default grid: eleven windowed kinds over [`DEFAULT_WINDOWS`],
/// MACD 12/26/9, Bollinger 20 ± 2σ and OBV.
pub fn default_grid() -> Vec<IndicatorSpec> {
    grid_for_windows(&DEFAULT_WINDOWS)
}

pub fn grid_for_windows(windows: &[usize]) -> Vec<IndicatorSpec> {
    let mut grid: Vec<IndicatorSpec> = IndicatorKind::WINDOWED
        .iter()
        .flat_map(|&k| windows.iter().map(move |&w| IndicatorSpec::windowed(k, w)))
        .collect();
    grid.push(IndicatorSpec::macd(12, 26, 9));
    grid.push(IndicatorSpec::bollinger(true, 20, 2.0));
    grid.push(IndicatorSpec::bollinger(false, 20, 2.0));
    grid.push(IndicatorSpec::obv());
    grid
}

/// A computed indicator before warm-up rows are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorColumn {
    pub name: String,
    pub class: FeatureClass,
    pub values: Vec<Option<f64>>,
}

pub fn compute_indicator(spec: &IndicatorSpec, series: &CandleSeries) -> Result<IndicatorColumn> {
    spec.validate()?;
    if series.len() <= spec.warm_up() {
        return Err(Error::InsufficientData(format!(
            "{} needs more than {} candles, series has {}",
            spec.name(),
            spec.warm_up(),
            series.len()
        )));
    }
    let close = series.closes();
    let w = spec.window;
    use IndicatorKind::*;
    let values = match spec.kind {
        Sma => kernels::sma(&close, w),
        Ema => kernels::ema(&close, w),
        Wma => kernels::wma(&close, w),
        Macd => kernels::macd_histogram(&close, spec.fast, spec.slow, spec.signal),
        Rsi => kernels::rsi(&close, w),
        StochasticK => kernels::stochastic_k(&series.highs(), &series.lows(), &close, w),
        StochasticD => kernels::stochastic_d(&series.highs(), &series.lows(), &close, w),
        Cci => kernels::cci(&series.highs(), &series.lows(), &close, w),
        Atr => kernels::atr(&series.highs(), &series.lows(), &close, w),
        BollingerUpper => kernels::bollinger(&close, w, spec.band_width, true),
        BollingerLower => kernels::bollinger(&close, w, spec.band_width, false),
        Roc => kernels::roc(&close, w),
        WilliamsR => kernels::williams_r(&series.highs(), &series.lows(), &close, w),
        Obv => kernels::obv(&close, &series.volumes()),
        Momentum => kernels::momentum(&close, w),
    };
    debug_assert!(values[spec.warm_up()..].iter().all(Option::is_some));
    Ok(IndicatorColumn {
        name: spec.name(),
        class: spec.kind.class(),
        values,
    })
}

/// OHLCV columns plus one column per spec, trimmed to the rows where every
/// column is defined.
pub fn generate_features(series: &CandleSeries, grid: &[IndicatorSpec]) -> Result<FeatureTable> {
    if grid.is_empty() {
        return Err(Error::invalid("indicator grid is empty"));
    }
    let mut names: Vec<String> = table::OHLCV_NAMES.iter().map(|s| s.to_string()).collect();
    for spec in grid {
        let name = spec.name();
        if names.contains(&name) {
            return Err(Error::invalid(format!("duplicate feature column `{name}`")));
        }
        names.push(name);
    }
    let computed = grid
        .iter()
        .map(|spec| compute_indicator(spec, series))
        .collect::<Result<Vec<_>>>()?;
    let skip = grid.iter().map(IndicatorSpec::warm_up).max().unwrap_or(0);

    let raw = [
        series.opens(),
        series.highs(),
        series.lows(),
        series.closes(),
        series.volumes(),
    ];
    let mut columns: Vec<FeatureColumn> = table::OHLCV_NAMES
        .iter()
        .zip(raw)
        .map(|(name, values)| FeatureColumn {
            name: name.to_string(),
            class: FeatureClass::Ohlcv,
            values: values[skip..].to_vec(),
        })
        .collect();
    for col in computed {
        let values = col.values[skip..]
            .iter()
            .map(|v| v.expect("rows past the longest warm-up are defined"))
            .collect();
        columns.push(FeatureColumn {
            name: col.name,
            class: col.class,
            values,
        });
    }
    FeatureTable::new(series.timestamps()[skip..].to_vec(), columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synthetic_sine_market, Candle, GapPolicy};

    fn series_from_closes(closes: &[f64]) -> CandleSeries {
        let candles = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Candle {
                timestamp: i as i64 * 60,
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 1.0,
            })
            .collect();
        CandleSeries::new("T", 60, candles, GapPolicy::Reject).unwrap()
    }

    #[test]
    fn ema_constant_is_fixed_point() {
        let s = series_from_closes(&[5.0; 30]);
        for w in [2, 7, 21] {
            let col = compute_indicator(&IndicatorSpec::windowed(IndicatorKind::Ema, w), &s).unwrap();
            assert!(col.values.iter().flatten().all(|&v| v == 5.0));
        }
    }

    #[test]
    fn ema_seeded_with_sma() {
        // k = 0.5: seed mean(1,2,3)=2, then 0.5*4+0.5*2=3, 0.5*5+0.5*3=4.
        let s = series_from_closes(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let col = compute_indicator(&IndicatorSpec::windowed(IndicatorKind::Ema, 3), &s).unwrap();
        assert_eq!(col.values, vec![None, None, Some(2.0), Some(3.0), Some(4.0)]);
    }

    #[test]
    fn rsi_of_rising_series_is_100() {
        let closes: Vec<f64> = (1..=40).map(f64::from).collect();
        let s = series_from_closes(&closes);
        let col = compute_indicator(&IndicatorSpec::windowed(IndicatorKind::Rsi, 14), &s).unwrap();
        assert!(col.values.iter().flatten().all(|&v| v == 100.0));
        assert_eq!(col.values.iter().flatten().count(), 40 - 14);
    }

    #[test]
    fn too_short_series_names_the_spec() {
        let s = series_from_closes(&[1.0; 10]);
        let err = compute_indicator(&IndicatorSpec::windowed(IndicatorKind::Sma, 21), &s).unwrap_err();
        assert!(err.to_string().contains("sma_21"), "{err}");
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(IndicatorSpec::windowed(IndicatorKind::Sma, 1).validate().is_err());
        assert!(IndicatorSpec::macd(26, 12, 9).validate().is_err());
        assert!(IndicatorSpec::macd(12, 26, 9).validate().is_ok());
    }

    #[test]
    fn default_grid_column_count() {
        // 11 windowed kinds x 5 windows + MACD + two bands + OBV, plus OHLCV.
        assert_eq!(default_grid().len(), 59);
        let s = synthetic_sine_market(300, 3600, 3);
        let table = generate_features(&s, &default_grid()).unwrap();
        assert_eq!(table.columns().len(), 64);
        // Longest warm-up is stochastic %D over 50 candles.
        assert_eq!(table.len(), 300 - 51);
    }

    #[test]
    fn two_emas_make_seven_columns() {
        let s = synthetic_sine_market(100, 3600, 3);
        let grid = [
            IndicatorSpec::windowed(IndicatorKind::Ema, 21),
            IndicatorSpec::windowed(IndicatorKind::Ema, 35),
        ];
        let table = generate_features(&s, &grid).unwrap();
        assert_eq!(table.columns().len(), 7);
        assert_eq!(table.len(), 100 - 34);
    }

    #[test]
    fn duplicate_names_rejected() {
        let s = synthetic_sine_market(100, 3600, 3);
        let grid = [
            IndicatorSpec::windowed(IndicatorKind::Ema, 21),
            IndicatorSpec::windowed(IndicatorKind::Ema, 21),
        ];
        assert!(generate_features(&s, &grid).is_err());
        assert!(generate_features(&s, &[]).is_err());
    }

    #[test]
    fn oscillators_are_non_price_like() {
        let s = synthetic_sine_market(200, 3600, 3);
        let table = generate_features(&s, &default_grid()).unwrap();
        for name in ["rsi_14", "cci_21", "obv", "macd_12_26_9"] {
            assert_eq!(table.column(name).unwrap().class, FeatureClass::NonPriceLike, "{name}");
        }
        for name in ["sma_7", "ema_21", "atr_14", "bb_upper_20_2"] {
            assert_eq!(table.column(name).unwrap().class, FeatureClass::PriceLike, "{name}");
        }
    }
}
