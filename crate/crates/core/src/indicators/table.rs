use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const OHLCV_NAMES: [&str; 5] = ["open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureClass {
    Ohlcv,
    PriceLike,
    NonPriceLike,
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureClass::Ohlcv => "ohlcv",
            FeatureClass::PriceLike => "price_like",
            FeatureClass::NonPriceLike => "non_price_like",
        })
    }
}

impl FromStr for FeatureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ohlcv" => Ok(FeatureClass::Ohlcv),
            "price_like" => Ok(FeatureClass::PriceLike),
            "non_price_like" => Ok(FeatureClass::NonPriceLike),
            other => Err(Error::Format(format!("unknown feature class `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub name: String,
    pub class: FeatureClass,
    pub values: Vec<f64>,
}

/// Dense, time-aligned feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    index: Vec<i64>,
    columns: Vec<FeatureColumn>,
}

impl FeatureTable {
    pub fn new(index: Vec<i64>, columns: Vec<FeatureColumn>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.values.len() != index.len() {
                return Err(Error::shape(format!(
                    "column `{}` has {} rows, index has {}",
                    c.name,
                    c.values.len(),
                    index.len()
                )));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::invalid(format!("duplicate feature column `{}`", c.name)));
            }
        }
        Ok(Self { index, columns })
    }

    pub fn index(&self) -> &[i64] {
        &self.index
    }

    pub fn columns(&self) -> &[FeatureColumn] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [FeatureColumn] {
        &mut self.columns
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn closes(&self) -> Result<&[f64]> {
        self.column("close")
            .map(|c| c.values.as_slice())
            .ok_or_else(|| Error::invalid("feature table has no `close` column"))
    }

    /// Names of the generated (non-OHLCV) columns, in storage order.
    pub fn generated_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.class != FeatureClass::Ohlcv)
            .map(|c| c.name.as_str())
            .collect()
    }

    /// Keeps only the named columns, preserving storage order.
    pub fn retain_columns(&self, keep: &HashSet<String>) -> FeatureTable {
        FeatureTable {
            index: self.index.clone(),
            columns: self
                .columns
                .iter()
                .filter(|c| keep.contains(&c.name))
                .cloned()
                .collect(),
        }
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureTable {
        FeatureTable {
            index: self.index[range.clone()].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| FeatureColumn {
                    values: c.values[range.clone()].to_vec(),
                    ..c.clone()
                })
                .collect(),
        }
    }

    /// Writes `<stem>.csv` and the `name=class` sidecar `<stem>.classes`.
    pub fn write_csv(&self, csv_path: &Path) -> Result<()> {
        let mut out = String::from("timestamp");
        for c in &self.columns {
            out.push(',');
            out.push_str(&c.name);
        }
        out.push('\n');
        for (r, ts) in self.index.iter().enumerate() {
            out.push_str(&ts.to_string());
            for c in &self.columns {
                out.push(',');
                out.push_str(&c.values[r].to_string());
            }
            out.push('\n');
        }
        std::fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;
        let sidecar = csv_path.with_extension("classes");
        let classes: String = self
            .columns
            .iter()
            .map(|c| format!("{}={}\n", c.name, c.class))
            .collect();
        std::fs::write(&sidecar, classes).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn read_csv(csv_path: &Path) -> Result<FeatureTable> {
        let sidecar = csv_path.with_extension("classes");
        let class_text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let mut classes = std::collections::HashMap::new();
        for (i, line) in class_text.lines().enumerate() {
            let (name, class) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected name=class in {}", sidecar.display()),
            })?;
            classes.insert(name.to_string(), class.parse::<FeatureClass>()?);
        }
        let text = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "empty feature file".into(),
            })?
            .split(',')
            .collect();
        if header.first() != Some(&"timestamp") {
            return Err(Error::Parse {
                line: 1,
                message: "first column must be `timestamp`".into(),
            });
        }
        let mut columns: Vec<FeatureColumn> = header[1..]
            .iter()
            .map(|name| {
                let class = *classes.get(*name).ok_or_else(|| {
                    Error::Format(format!("column `{name}` missing from class map"))
                })?;
                Ok(FeatureColumn {
                    name: name.to_string(),
                    class,
                    values: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;
        let mut index = Vec::new();
        for (i, line) in lines.enumerate() {
            let bad = |m: String| Error::Parse {
                line: i + 2,
                message: m,
            };
            let mut fields = line.split(',');
            let ts = fields.next().unwrap_or("");
            index.push(ts.parse().map_err(|_| bad(format!("bad timestamp `{ts}`")))?);
            for col in columns.iter_mut() {
                let f = fields.next().ok_or_else(|| bad("missing field".into()))?;
                col.values
                    .push(f.parse().map_err(|_| bad(format!("bad number `{f}`")))?);
            }
        }
        FeatureTable::new(index, columns)
    }
}
