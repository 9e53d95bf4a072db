//! OHLCV candle ingestion and validation.
//!
//! CSV is the only ingestion format. The header must be exactly
//! `timestamp,open,high,low,close,volume` with integral epoch seconds.
//! Prices are parsed from decimal text into `f64`, and written back with
//! the shortest representation that round-trips, so `load_csv` after
//! `save_csv` reproduces the same bits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Candle {
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::CandleInvariant {
                timestamp: self.timestamp,
                message,
            })
        };
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().chain([&self.volume]).any(|v| !v.is_finite()) {
            return fail("non-finite value".into());
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return fail("prices must be positive".into());
        }
        if self.volume < 0.0 {
            return fail(format!("negative volume {}", self.volume));
        }
        if self.low > self.open.min(self.close) {
            return fail(format!(
                "low {} above min(open, close) {}",
                self.low,
                self.open.min(self.close)
            ));
        }
        if self.high < self.open.max(self.close) {
            return fail(format!(
                "high {} below max(open, close) {}",
                self.high,
                self.open.max(self.close)
            ));
        }
        Ok(())
    }
}

/// How `load_csv` treats gaps wider than one timeframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    #[default]
    Reject,
    /// Insert flat candles at the previous close with zero volume.
    ForwardFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandleSeries {
    pub symbol: String,
    pub timeframe: i64,
    candles: Vec<Candle>,
}

impl CandleSeries {
    /// Builds a series, sorting by timestamp and checking every invariant.
    pub fn new(
        symbol: impl Into<String>,
        timeframe: i64,
        mut candles: Vec<Candle>,
        gaps: GapPolicy,
    ) -> Result<Self> {
        if timeframe <= 0 {
            return Err(Error::invalid(format!("timeframe must be positive, got {timeframe}")));
        }
        for c in &candles {
            c.validate()?;
        }
        candles.sort_by_key(|c| c.timestamp);
        let mut out: Vec<Candle> = Vec::with_capacity(candles.len());
        for c in candles {
            if let Some(prev) = out.last().copied() {
                let gap = c.timestamp - prev.timestamp;
                if gap == 0 {
                    return Err(Error::CandleInvariant {
                        timestamp: c.timestamp,
                        message: "duplicate timestamp".into(),
                    });
                }
                if gap % timeframe != 0 {
                    return Err(Error::CandleInvariant {
                        timestamp: c.timestamp,
                        message: format!("gap {gap}s is not a multiple of timeframe {timeframe}s"),
                    });
                }
                let missing = gap / timeframe - 1;
                if missing > 0 {
                    match gaps {
                        GapPolicy::Reject => {
                            return Err(Error::CandleInvariant {
                                timestamp: c.timestamp,
                                message: format!("{missing} missing candle(s) before this one"),
                            })
                        }
                        GapPolicy::ForwardFill => {
                            for k in 1..=missing {
                                out.push(Candle {
                                    timestamp: prev.timestamp + k * timeframe,
                                    open: prev.close,
                                    high: prev.close,
                                    low: prev.close,
                                    close: prev.close,
                                    volume: 0.0,
                                });
                            }
                        }
                    }
                }
            }
            out.push(c);
        }
        Ok(Self {
            symbol: symbol.into(),
            timeframe,
            candles: out,
        })
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn timestamps(&self) -> Vec<i64> {
        self.candles.iter().map(|c| c.timestamp).collect()
    }

    pub fn opens(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.open).collect()
    }

    pub fn highs(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.high).collect()
    }

    pub fn lows(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.low).collect()
    }

    pub fn closes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.close).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.candles.iter().map(|c| c.volume).collect()
    }

    /// Contiguous sub-series; already validated so no re-check is needed.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CandleSeries {
        CandleSeries {
            symbol: self.symbol.clone(),
            timeframe: self.timeframe,
            candles: self.candles[range].to_vec(),
        }
    }

    /// Multiplies every price by `factor`, leaving volume untouched.
    pub fn scale_prices(&self, factor: f64) -> CandleSeries {
        let candles = self
            .candles
            .iter()
            .map(|c| Candle {
                open: c.open * factor,
                high: c.high * factor,
                low: c.low * factor,
                close: c.close * factor,
                ..*c
            })
            .collect();
        CandleSeries {
            candles,
            ..self.clone()
        }
    }
}

/// Reads and validates a candle CSV. The symbol is taken from the file stem.
pub fn load_csv(path: &Path, timeframe: i64, gaps: GapPolicy) -> Result<CandleSeries> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, &symbol, timeframe, gaps)
}

pub fn parse_csv(text: &str, symbol: &str, timeframe: i64, gaps: GapPolicy) -> Result<CandleSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut candles = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let timestamp: i64 = field(0).parse().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp `{}` is not an integer", field(0)),
        })?;
        let mut nums = [0.0; 5];
        for (k, slot) in nums.iter_mut().enumerate() {
            let raw = field(k + 1);
            *slot = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{} `{raw}` is not a number", CSV_HEADER[k + 1]),
            })?;
        }
        candles.push(Candle {
            timestamp,
            open: nums[0],
            high: nums[1],
            low: nums[2],
            close: nums[3],
            volume: nums[4],
        });
    }
    CandleSeries::new(symbol, timeframe, candles, gaps)
}

pub fn to_csv_string(series: &CandleSeries) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for c in series.candles() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.timestamp, c.open, c.high, c.low, c.close, c.volume
        ));
    }
    out
}

pub fn save_csv(series: &CandleSeries, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(series)).map_err(|e| Error::io(path, e))
}

/// Splits into the earliest `ceil((1 - f) * n)` candles and the remainder.
pub fn chronological_split(
    series: &CandleSeries,
    test_fraction: f64,
) -> Result<(CandleSeries, CandleSeries)> {
    let cut = split_point(series.len(), test_fraction)?;
    Ok((series.slice(0..cut), series.slice(cut..series.len())))
}

/// Index of the first test element for an `n`-long sequence.
pub fn split_point(n: usize, test_fraction: f64) -> Result<usize> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    // Round away representation noise so 0.2 of 100 gives 80, not 81.
    let train = ((1.0 - test_fraction) * n as f64 * 1e9).round() / 1e9;
    let cut = train.ceil() as usize;
    if cut == 0 || cut >= n {
        return Err(Error::InsufficientData(format!(
            "split of {n} candles at fraction {test_fraction} leaves an empty side"
        )));
    }
    Ok(cut)
}

/// Deterministic two-tone market used as a predictable benchmark series.
///
/// Log-price is the sum of two sinusoids (periods 40 and 13.7 candles) plus
/// small Gaussian noise; volume follows a third slow cycle. Prices are
/// rounded to 4 decimals.
pub fn synthetic_sine_market(n: usize, timeframe: i64, seed: u64) -> CandleSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let price_noise = Normal::new(0.0, 0.002).expect("valid normal");
    let wick = Normal::new(0.0, 0.002).expect("valid normal");
    let vol_noise = Normal::new(0.0, 0.1).expect("valid normal");
    let round4 = |x: f64| (x * 1e4).round() / 1e4;
    let start = 1_500_000_000 / timeframe * timeframe;
    let tau = std::f64::consts::TAU;

    let mut candles = Vec::with_capacity(n);
    let mut prev_close = 100.0;
    for t in 0..n {
        let tf = t as f64;
        let log_price = 100f64.ln()
            + 0.06 * (tau * tf / 40.0).sin()
            + 0.03 * (tau * tf / 13.7 + 0.5).sin()
            + price_noise.sample(&mut rng);
        let close = round4(log_price.exp());
        let open = round4(prev_close);
        let hi_wick: f64 = wick.sample(&mut rng);
        let lo_wick: f64 = wick.sample(&mut rng);
        let high = round4(open.max(close) * (1.0 + hi_wick.abs())).max(open.max(close));
        let low = round4(open.min(close) * (1.0 - lo_wick.abs())).min(open.min(close));
        let vol_shape = 1.0 + 0.5 * (tau * tf / 97.0).sin() + vol_noise.sample(&mut rng);
        let volume = round4(1000.0 * vol_shape.max(0.05));
        candles.push(Candle {
            timestamp: start + t as i64 * timeframe,
            open,
            high,
            low,
            close,
            volume,
        });
        prev_close = close;
    }
    CandleSeries::new("SYNTH", timeframe, candles, GapPolicy::Reject)
        .expect("generator produces valid candles")
}
