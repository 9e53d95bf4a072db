//! Windowed training instances with next-candle direction labels.
//!
//! An instance ending at table row `i` holds rows `i - window + 1 ..= i` of
//! every channel, laid out `channels x 1 x window`. Its label is 1 when the
//! close at `i + 1` is strictly above the close at `i`, else 0 (a flat
//! candle counts as down).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{FeatureClass, FeatureTable};
use crate::nn::checkpoint::Reader;
use crate::nn::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelInfo {
    pub name: String,
    pub class: FeatureClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// `[instances, channels, 1, window]`.
    pub instances: Tensor,
    pub labels: Vec<f64>,
    pub channel_map: Vec<ChannelInfo>,
    pub window: usize,
    pub stride: usize,
    /// Table row of each window's last candle.
    pub end_rows: Vec<usize>,
    pub end_timestamps: Vec<i64>,
    /// Close at the window end and at the following candle.
    pub close_now: Vec<f64>,
    pub close_next: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

/// Direction label: 1 if the next close is strictly higher.
pub fn direction_label(close_now: f64, close_next: f64) -> f64 {
    if close_next > close_now {
        1.0
    } else {
        0.0
    }
}

fn group_rank(class: FeatureClass) -> u8 {
    match class {
        FeatureClass::Ohlcv => 0,
        FeatureClass::PriceLike => 1,
        FeatureClass::NonPriceLike => 2,
    }
}

/// Builds windows ending at rows `window-1, window-1+stride, ...` while a
/// next row exists. `closes` are the raw closes aligned with the table and
/// drive the labels.
pub fn make_windows(table: &FeatureTable, closes: &[f64], window: usize, stride: usize) -> Result<WindowedDataset> {
    if window == 0 || stride == 0 {
        return Err(Error::invalid("window and stride must be >= 1"));
    }
    if closes.len() != table.len() {
        return Err(Error::shape(format!(
            "{} closes for a table of {} rows",
            closes.len(),
            table.len()
        )));
    }
    let rows = table.len();
    if rows < window + 1 {
        return Err(Error::InsufficientData(format!(
            "{rows} rows cannot hold a {window}-candle window plus its label"
        )));
    }
    let mut cols: Vec<_> = table.columns().iter().collect();
    cols.sort_by(|a, b| {
        group_rank(a.class)
            .cmp(&group_rank(b.class))
            .then_with(|| a.name.cmp(&b.name))
    });
    let channel_map: Vec<ChannelInfo> = cols
        .iter()
        .map(|c| ChannelInfo {
            name: c.name.clone(),
            class: c.class,
        })
        .collect();
    let ends: Vec<usize> = (window - 1..rows - 1).step_by(stride).collect();
    let channels = cols.len();
    let mut data = Vec::with_capacity(ends.len() * channels * window);
    for &end in &ends {
        for c in &cols {
            data.extend_from_slice(&c.values[end + 1 - window..=end]);
        }
    }
    let instances = Tensor::new(vec![ends.len(), channels, 1, window], data)?;
    Ok(WindowedDataset {
        instances,
        labels: ends.iter().map(|&i| direction_label(closes[i], closes[i + 1])).collect(),
        channel_map,
        window,
        stride,
        end_timestamps: ends.iter().map(|&i| table.index()[i]).collect(),
        close_now: ends.iter().map(|&i| closes[i]).collect(),
        close_next: ends.iter().map(|&i| closes[i + 1]).collect(),
        end_rows: ends,
        meta: BTreeMap::new(),
    })
}

/// The three channel groups of a dataset, instance-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGroups {
    pub ohlcv: Tensor,
    pub price_like: Tensor,
    pub non_price_like: Tensor,
}

impl ChannelGroups {
    /// Reassembles groups in channel-map order.
    pub fn merge(&self) -> Result<Tensor> {
        Tensor::concat_channels(&[&self.ohlcv, &self.price_like, &self.non_price_like])
    }
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channel_map.len()
    }

    /// Instance `i` as a `[channels, 1, window]` tensor.
    pub fn instance(&self, i: usize) -> Result<Tensor> {
        let t = self.instances.slice_outer(i, 1)?;
        t.reshape(&[self.channels(), 1, self.window])
    }

    pub fn group_sizes(&self) -> [usize; 3] {
        let count = |cls| self.channel_map.iter().filter(|c| c.class == cls).count();
        [
            count(FeatureClass::Ohlcv),
            count(FeatureClass::PriceLike),
            count(FeatureClass::NonPriceLike),
        ]
    }

    pub fn split_channels(&self) -> Result<ChannelGroups> {
        let sizes = self.group_sizes();
        if sizes[1] == 0 || sizes[2] == 0 {
            return Err(Error::invalid(format!(
                "dataset has {} price-like and {} non-price-like channels; both groups need at least one (use a richer indicator grid)",
                sizes[1], sizes[2]
            )));
        }
        let ordered = self
            .channel_map
            .windows(2)
            .all(|w| group_rank(w[0].class) <= group_rank(w[1].class));
        if !ordered {
            return Err(Error::invalid("channel map is not grouped OHLCV, price-like, non-price-like"));
        }
        let mut parts = self.instances.split_channels(&sizes)?.into_iter();
        Ok(ChannelGroups {
            ohlcv: parts.next().expect("three groups"),
            price_like: parts.next().expect("three groups"),
            non_price_like: parts.next().expect("three groups"),
        })
    }

    /// Instances whose positions fall in `range`.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Result<WindowedDataset> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::invalid(format!(
                "subset {range:?} out of range for {} instances",
                self.len()
            )));
        }
        Ok(WindowedDataset {
            instances: self.instances.slice_outer(range.start, range.len())?,
            labels: self.labels[range.clone()].to_vec(),
            channel_map: self.channel_map.clone(),
            window: self.window,
            stride: self.stride,
            end_rows: self.end_rows[range.clone()].to_vec(),
            end_timestamps: self.end_timestamps[range.clone()].to_vec(),
            close_now: self.close_now[range.clone()].to_vec(),
            close_next: self.close_next[range].to_vec(),
            meta: self.meta.clone(),
        })
    }

    fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_map.iter().position(|c| c.name == name)
    }
}

fn is_price_channel(c: &ChannelInfo) -> bool {
    match c.class {
        FeatureClass::PriceLike => true,
        FeatureClass::Ohlcv => c.name != "volume",
        FeatureClass::NonPriceLike => false,
    }
}

/// Per-channel mean and standard deviation for the z-scored channels
/// (volume and non-price-like), fitted on training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<String>,
    /// `None` for channels normalised by the window's last close.
    pub moments: Vec<Option<(f64, f64)>>,
}

impl NormStats {
    pub fn fit(train: &WindowedDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::InsufficientData("cannot fit normalisation on zero windows".into()));
        }
        let (n, c, w) = (train.len(), train.channels(), train.window);
        let data = train.instances.data();
        let moments = train
            .channel_map
            .iter()
            .enumerate()
            .map(|(ch, info)| {
                if is_price_channel(info) {
                    return None;
                }
                let values = (0..n).flat_map(|s| data[(s * c + ch) * w..][..w].iter());
                let count = (n * w) as f64;
                let mean = values.clone().sum::<f64>() / count;
                let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
                Some((mean, var.sqrt()))
            })
            .collect();
        Ok(Self {
            channels: train.channel_map.iter().map(|c| c.name.clone()).collect(),
            moments,
        })
    }
}

/// Price channels become `x / close_last - 1` per window; volume and
/// non-price-like channels are z-scored with `stats`. A zero-variance
/// channel is only centred.
pub fn normalize(ds: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    let names: Vec<&str> = ds.channel_map.iter().map(|c| c.name.as_str()).collect();
    if stats.channels.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(Error::invalid("normalisation stats were fitted on different channels"));
    }
    let close_ch = ds
        .channel_index("close")
        .ok_or_else(|| Error::invalid("dataset has no `close` channel"))?;
    let (n, c, w) = (ds.len(), ds.channels(), ds.window);
    for (info, m) in ds.channel_map.iter().zip(&stats.moments) {
        if let Some((_, sd)) = m {
            if *sd == 0.0 {
                log::warn!("channel `{}` has zero variance; centring only", info.name);
            }
        }
    }
    let mut out = ds.instances.clone();
    let data = out.data_mut();
    for s in 0..n {
        let close_last = ds.instances.data()[(s * c + close_ch) * w + w - 1];
        if close_last == 0.0 {
            return Err(Error::NonFinite(format!("window {s} ends on a zero close")));
        }
        for (ch, m) in stats.moments.iter().enumerate() {
            let row = &mut data[(s * c + ch) * w..][..w];
            match m {
                None => row.iter_mut().for_each(|v| *v = *v / close_last - 1.0),
                Some((mean, sd)) if *sd > 0.0 => row.iter_mut().for_each(|v| *v = (*v - mean) / sd),
                Some((mean, _)) => row.iter_mut().for_each(|v| *v -= mean),
            }
        }
    }
    out.ensure_finite("normalised dataset")?;
    Ok(WindowedDataset {
        instances: out,
        ..ds.clone()
    })
}

const DATASET_MAGIC: &str = "CANDLENET-DATASET v1";

impl WindowedDataset {
    /// Text header (counts, shapes, channel map, metadata) terminated by
    /// `end`, followed by little-endian binary blocks: instances (f64,
    /// row-major), labels (f64), end rows (u64), end timestamps (i64),
    /// close now (f64), close next (f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        let _ = writeln!(header, "{DATASET_MAGIC}");
        let _ = writeln!(header, "instances {}", self.len());
        let _ = writeln!(header, "channels {}", self.channels());
        let _ = writeln!(header, "height 1");
        let _ = writeln!(header, "window {}", self.window);
        let _ = writeln!(header, "stride {}", self.stride);
        for (i, c) in self.channel_map.iter().enumerate() {
            let _ = writeln!(header, "channel {i} {} {}", c.class, c.name);
        }
        for (k, v) in &self.meta {
            let _ = writeln!(header, "meta {k} {v}");
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for v in self.instances.data().iter().chain(&self.labels) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &r in &self.end_rows {
            out.extend_from_slice(&(r as u64).to_le_bytes());
        }
        for &t in &self.end_timestamps {
            out.extend_from_slice(&t.to_le_bytes());
        }
        for v in self.close_now.iter().chain(&self.close_next) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let end_marker = b"\nend\n";
        let header_end = bytes
            .windows(end_marker.len())
            .position(|w| w == end_marker)
            .ok_or_else(|| Error::Format("dataset header has no `end` line".into()))?
            + end_marker.len();
        let header = std::str::from_utf8(&bytes[..header_end])
            .map_err(|_| Error::Format("dataset header is not utf-8".into()))?;
        let mut lines = header.lines();
        if lines.next() != Some(DATASET_MAGIC) {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let bad = |l: &str| Error::Format(format!("bad dataset header line `{l}`"));
        let (mut n, mut c, mut w, mut stride) = (None, None, None, None);
        let mut channel_map = Vec::new();
        let mut meta = BTreeMap::new();
        for line in lines {
            let mut parts = line.splitn(2, ' ');
            let key = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("");
            let num = || rest.parse::<usize>().map_err(|_| bad(line));
            match key {
                "instances" => n = Some(num()?),
                "channels" => c = Some(num()?),
                "window" => w = Some(num()?),
                "stride" => stride = Some(num()?),
                "height" if rest == "1" => {}
                "channel" => {
                    let mut p = rest.splitn(3, ' ');
                    let idx: usize = p.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line))?;
                    let class = p.next().ok_or_else(|| bad(line))?.parse()?;
                    let name = p.next().ok_or_else(|| bad(line))?.to_string();
                    if idx != channel_map.len() {
                        return Err(bad(line));
                    }
                    channel_map.push(ChannelInfo { name, class });
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "end" => break,
                _ => return Err(bad(line)),
            }
        }
        let (n, c, w, stride) = match (n, c, w, stride) {
            (Some(n), Some(c), Some(w), Some(s)) => (n, c, w, s),
            _ => return Err(Error::Format("dataset header missing counts".into())),
        };
        if channel_map.len() != c {
            return Err(Error::Format(format!(
                "dataset header lists {} channels, declares {c}",
                channel_map.len()
            )));
        }
        let mut r = Reader {
            bytes,
            pos: header_end,
        };
        let mut f64s = |count: usize| (0..count).map(|_| r.f64()).collect::<Result<Vec<f64>>>();
        let values = f64s(n * c * w)?;
        let labels = f64s(n)?;
        let end_rows = (0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let end_timestamps = (0..n).map(|_| r.u64().map(|v| v as i64)).collect::<Result<Vec<_>>>()?;
        let mut f64s = |count: usize| (0..count).map(|_| r.f64()).collect::<Result<Vec<f64>>>();
        let close_now = f64s(n)?;
        let close_next = f64s(n)?;
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Ok(Self {
            instances: Tensor::new(vec![n, c, 1, w], values)?,
            labels,
            channel_map,
            window: w,
            stride,
            end_rows,
            end_timestamps,
            close_now,
            close_next,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::FeatureColumn;

    fn table(rows: usize, price_like: usize, non_price: usize) -> FeatureTable {
        let mut cols: Vec<FeatureColumn> = ["open", "high", "low", "close", "volume"]
            .iter()
            .enumerate()
            .map(|(k, n)| FeatureColumn {
                name: n.to_string(),
                class: FeatureClass::Ohlcv,
                values: (0..rows).map(|r| 100.0 + r as f64 + k as f64 * 0.1).collect(),
            })
            .collect();
        for p in 0..price_like {
            cols.push(FeatureColumn {
                name: format!("p{p:02}"),
                class: FeatureClass::PriceLike,
                values: (0..rows).map(|r| 99.0 + r as f64).collect(),
            });
        }
        for q in 0..non_price {
            cols.push(FeatureColumn {
                name: format!("q{q:02}"),
                class: FeatureClass::NonPriceLike,
                values: (0..rows).map(|r| ((r * (q + 1)) % 7) as f64).collect(),
            });
        }
        FeatureTable::new((0..rows as i64).collect(), cols).unwrap()
    }

    #[test]
    fn window_count_and_labels() {
        let t = table(100, 1, 1);
        let closes = t.closes().unwrap().to_vec();
        let ds = make_windows(&t, &closes, 24, 1).unwrap();
        assert_eq!(ds.len(), 76);
        assert_eq!(ds.end_rows.first(), Some(&23));
        assert_eq!(ds.end_rows.last(), Some(&98));
        assert!(ds.labels.iter().all(|&l| l == 1.0));
        assert_eq!(ds.instances.shape(), &[76, 7, 1, 24]);
    }

    #[test]
    fn label_rule() {
        assert_eq!(direction_label(100.0, 105.0), 1.0);
        assert_eq!(direction_label(105.0, 100.0), 0.0);
        assert_eq!(direction_label(100.0, 100.0), 0.0);
    }

    #[test]
    fn channel_order_is_grouped_then_alphabetical() {
        let t = table(30, 2, 2);
        let ds = make_windows(&t, t.closes().unwrap(), 5, 1).unwrap();
        let names: Vec<&str> = ds.channel_map.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            ["close", "high", "low", "open", "volume", "p00", "p01", "q00", "q01"]
        );
    }

    #[test]
    fn too_few_rows() {
        let t = table(24, 1, 1);
        assert!(make_windows(&t, t.closes().unwrap(), 24, 1).is_err());
        assert!(make_windows(&t, t.closes().unwrap(), 23, 0).is_err());
    }

    #[test]
    fn split_shapes_and_merge() {
        let t = table(40, 12, 13);
        let ds = make_windows(&t, t.closes().unwrap(), 24, 1).unwrap();
        let g = ds.split_channels().unwrap();
        assert_eq!(&g.ohlcv.shape()[1..], &[5, 1, 24]);
        assert_eq!(&g.price_like.shape()[1..], &[12, 1, 24]);
        assert_eq!(&g.non_price_like.shape()[1..], &[13, 1, 24]);
        assert_eq!(g.merge().unwrap(), ds.instances);
    }

    #[test]
    fn empty_group_is_an_error() {
        let t = table(40, 0, 3);
        let ds = make_windows(&t, t.closes().unwrap(), 24, 1).unwrap();
        let err = ds.split_channels().unwrap_err();
        assert!(err.to_string().contains("richer indicator grid"), "{err}");
    }

    #[test]
    fn normalisation_rules() {
        let t = table(60, 2, 2);
        let ds = make_windows(&t, t.closes().unwrap(), 10, 1).unwrap();
        let stats = NormStats::fit(&ds).unwrap();
        let n = normalize(&ds, &stats).unwrap();
        let close = n.channel_index("close").unwrap();
        let (c, w) = (n.channels(), n.window);
        for s in 0..n.len() {
            assert_eq!(n.instances.data()[(s * c + close) * w + w - 1], 0.0);
        }
        // Doubling prices leaves price channels unchanged.
        let mut doubled = ds.clone();
        for (ch, info) in ds.channel_map.iter().enumerate() {
            if is_price_channel(info) {
                for s in 0..ds.len() {
                    for v in &mut doubled.instances.data_mut()[(s * c + ch) * w..][..w] {
                        *v *= 2.0;
                    }
                }
            }
        }
        let n2 = normalize(&doubled, &stats).unwrap();
        for (ch, info) in ds.channel_map.iter().enumerate() {
            if is_price_channel(info) {
                for s in 0..ds.len() {
                    let a = &n.instances.data()[(s * c + ch) * w..][..w];
                    let b = &n2.instances.data()[(s * c + ch) * w..][..w];
                    for (x, y) in a.iter().zip(b) {
                        assert!((x - y).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_non_price_channel_goes_to_zero() {
        let mut t = table(40, 1, 1);
        t.columns_mut()[6].values = vec![3.0; 40];
        let ds = make_windows(&t, t.closes().unwrap(), 8, 1).unwrap();
        let stats = NormStats::fit(&ds).unwrap();
        let n = normalize(&ds, &stats).unwrap();
        let ch = n.channel_index("q00").unwrap();
        let (c, w) = (n.channels(), n.window);
        for s in 0..n.len() {
            assert!(n.instances.data()[(s * c + ch) * w..][..w].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn binary_roundtrip() {
        let t = table(50, 2, 3);
        let mut ds = make_windows(&t, t.closes().unwrap(), 6, 2).unwrap();
        ds.meta.insert("config_hash".into(), "abc123".into());
        let back = WindowedDataset::from_bytes(&ds.to_bytes()).unwrap();
        assert_eq!(back, ds);
        let bytes = ds.to_bytes();
        assert!(WindowedDataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
