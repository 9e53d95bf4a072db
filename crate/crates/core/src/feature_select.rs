//! Gradient-boosted decision trees used as a feature ranker.
//!
//! Trees are grown by exact greedy search over presorted feature values on
//! the logistic loss, with Newton leaf weights `-G / (H + λ)` scaled by the
//! learning rate. A feature's importance is the total split gain it earned.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::{FeatureClass, FeatureTable};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub top_k: usize,
    /// L2 penalty on leaf weights.
    #[serde(default = "default_l2")]
    pub l2: f64,
}

fn default_l2() -> f64 {
    1.0
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 20,
            top_k: 25,
            l2: 1.0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.max_depth == 0 || self.top_k == 0 || self.min_samples_leaf == 0 {
            return Err(Error::invalid(
                "gbdt rounds, max_depth, min_samples_leaf and top_k must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid(format!(
                "gbdt learning_rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.l2 < 0.0 {
            return Err(Error::invalid("gbdt l2 must be >= 0"));
        }
        Ok(())
    }
}

/// Row-major feature matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: usize, values: Vec<f64>) -> Result<Self> {
        if names.len() * rows != values.len() {
            return Err(Error::shape(format!(
                "{} rows x {} columns needs {} values, got {}",
                rows,
                names.len(),
                rows * names.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gbdt feature matrix".into()));
        }
        Ok(Self { names, rows, values })
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols()..(row + 1) * self.cols()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] < *threshold { *left } else { *right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Initial log-odds.
    pub base_score: f64,
    /// Total split gain per feature, aligned with `feature_names`.
    pub importance: Vec<f64>,
    /// Mean logistic loss before the first round and after each round.
    pub loss_history: Vec<f64>,
    /// Set when the labels held a single class and nothing was fitted.
    pub degenerate: bool,
}

impl GbdtModel {
    pub fn predict_logit(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.predict_logit(row))
    }

    /// `(name, importance)` sorted by descending importance, ties by name.
    pub fn ranking(&self) -> Vec<(String, f64)> {
        let mut r: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.importance.iter().copied())
            .collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        r
    }

    /// CSV with header `feature,importance`, most important first.
    pub fn importance_csv(&self) -> String {
        let mut out = String::from("feature,importance\n");
        for (name, imp) in self.ranking() {
            out.push_str(&format!("{name},{imp}\n"));
        }
        out
    }
}

fn logistic_loss(logits: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, evaluated stably.
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - y * z
        })
        .sum();
    total / labels.len() as f64
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    sorted: &'a [Vec<usize>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbdtConfig,
    in_node: Vec<bool>,
    nodes: Vec<TreeNode>,
    importance: &'a mut [f64],
}

impl Grower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.l2)
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<SplitCandidate> {
        for &r in rows {
            self.in_node[r] = true;
        }
        let (g_tot, h_tot) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        let parent = self.score(g_tot, h_tot);
        let n = rows.len();
        let min_leaf = self.cfg.min_samples_leaf;
        let mut best: Option<SplitCandidate> = None;
        for f in 0..self.x.cols() {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            let mut prev: Option<f64> = None;
            for &r in &self.sorted[f] {
                if !self.in_node[r] {
                    continue;
                }
                let v = self.x.get(r, f);
                if let Some(pv) = prev {
                    if v > pv && nl >= min_leaf && n - nl >= min_leaf {
                        let gain = 0.5
                            * (self.score(gl, hl) + self.score(g_tot - gl, h_tot - hl) - parent);
                        if gain > best.as_ref().map_or(0.0, |b| b.gain) {
                            // Midpoint, unless rounding collapses it onto the left value.
                            let mid = pv + 0.5 * (v - pv);
                            best = Some(SplitCandidate {
                                feature: f,
                                threshold: if mid > pv { mid } else { v },
                                gain,
                            });
                        }
                    }
                }
                gl += self.grad[r];
                hl += self.hess[r];
                nl += 1;
                prev = Some(v);
            }
        }
        for &r in rows {
            self.in_node[r] = false;
        }
        best
    }

    fn leaf(&mut self, rows: &[usize]) -> usize {
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &r| (g + self.grad[r], h + self.hess[r]));
        self.nodes.push(TreeNode::Leaf {
            weight: -g / (h + self.cfg.l2) * self.cfg.learning_rate,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        if depth >= self.cfg.max_depth || rows.len() < 2 * self.cfg.min_samples_leaf {
            return self.leaf(&rows);
        }
        let Some(split) = self.best_split(&rows) else {
            return self.leaf(&rows);
        };
        self.importance[split.feature] += split.gain;
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.x.get(r, split.feature) < split.threshold);
        let idx = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { weight: 0.0 });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[idx] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            left,
            right,
        };
        idx
    }
}

pub fn fit_gbdt(x: &FeatureMatrix, labels: &[f64], cfg: &GbdtConfig) -> Result<GbdtModel> {
    cfg.validate()?;
    if labels.len() != x.rows {
        return Err(Error::shape(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows
        )));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid("gbdt labels must be 0 or 1"));
    }
    if x.rows < 2 * cfg.min_samples_leaf {
        return Err(Error::InsufficientData(format!(
            "gbdt needs at least {} rows, got {}",
            2 * cfg.min_samples_leaf,
            x.rows
        )));
    }
    let positives = labels.iter().sum::<f64>();
    let mut model = GbdtModel {
        feature_names: x.names.clone(),
        trees: Vec::new(),
        base_score: 0.0,
        importance: vec![0.0; x.cols()],
        loss_history: Vec::new(),
        degenerate: false,
    };
    if positives == 0.0 || positives == x.rows as f64 {
        model.degenerate = true;
        model.base_score = if positives == 0.0 { -f64::INFINITY } else { f64::INFINITY };
        return Ok(model);
    }
    let p0 = positives / x.rows as f64;
    model.base_score = (p0 / (1.0 - p0)).ln();

    let sorted: Vec<Vec<usize>> = (0..x.cols())
        .map(|f| {
            let mut idx: Vec<usize> = (0..x.rows).collect();
            idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            idx
        })
        .collect();
    let mut logits = vec![model.base_score; x.rows];
    model.loss_history.push(logistic_loss(&logits, labels));
    for _ in 0..cfg.rounds {
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let grad: Vec<f64> = probs.iter().zip(labels).map(|(p, y)| p - y).collect();
        let hess: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();
        let mut grower = Grower {
            x,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            cfg,
            in_node: vec![false; x.rows],
            nodes: Vec::new(),
            importance: &mut model.importance,
        };
        grower.grow((0..x.rows).collect(), 0);
        let tree = Tree { nodes: grower.nodes };
        for (r, z) in logits.iter_mut().enumerate() {
            *z += tree.predict(x.row(r));
        }
        model.trees.push(tree);
        model.loss_history.push(logistic_loss(&logits, labels));
    }
    Ok(model)
}

/// Selector inputs from a feature table: one row per table row that has a
/// successor, labelled 1 when the next close is strictly higher. Price-like
/// columns are expressed relative to the row's close (`x / close - 1`).
pub fn selection_matrix(table: &FeatureTable) -> Result<(FeatureMatrix, Vec<f64>)> {
    let closes = table.closes()?;
    if table.len() < 2 {
        return Err(Error::InsufficientData("selector needs at least 2 rows".into()));
    }
    let cols: Vec<_> = table
        .columns()
        .iter()
        .filter(|c| c.class != FeatureClass::Ohlcv)
        .collect();
    let rows = table.len() - 1;
    let mut values = Vec::with_capacity(rows * cols.len());
    for r in 0..rows {
        for c in &cols {
            let v = c.values[r];
            values.push(if c.class == FeatureClass::PriceLike {
                v / closes[r] - 1.0
            } else {
                v
            });
        }
    }
    let labels = (0..rows)
        .map(|r| if closes[r + 1] > closes[r] { 1.0 } else { 0.0 })
        .collect();
    let names = cols.iter().map(|c| c.name.clone()).collect();
    Ok((FeatureMatrix::new(names, rows, values)?, labels))
}

/// Keeps every OHLCV column plus the `k` generated columns with the highest
/// importance; ties go to the lexicographically smaller name.
pub fn select_top_k(model: &GbdtModel, table: &FeatureTable, k: usize) -> Result<FeatureTable> {
    if k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let generated = table.generated_names();
    if k > generated.len() {
        return Err(Error::invalid(format!(
            "top_k {k} exceeds the {} generated columns",
            generated.len()
        )));
    }
    let importance_of = |name: &str| {
        model
            .feature_names
            .iter()
            .position(|n| n == name)
            .map_or(0.0, |i| model.importance[i])
    };
    let mut ranked: Vec<(&str, f64)> = generated.iter().map(|&n| (n, importance_of(n))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut keep: HashSet<String> = ranked[..k].iter().map(|(n, _)| n.to_string()).collect();
    for c in table.columns() {
        if c.class == FeatureClass::Ohlcv {
            keep.insert(c.name.clone());
        }
    }
    Ok(table.retain_columns(&keep))
}
