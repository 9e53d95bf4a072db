//! Confidence-thresholded long/short strategy and backtest.
//!
//! A risk/reward ratio `θ` sets two thresholds on the classifier output:
//! go long when `σ >= 1/(1+θ)`, short when `σ <= θ/(1+θ)`. Each position
//! risks `|σ - 0.5|` of the margin base, opens at the window's close, exits
//! at the next close and pays the fee on both sides.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::direction_label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub theta: f64,
    pub fee_rate: f64,
    /// Which account the ledger follows; both PnL totals are always reported.
    pub profit_saving: bool,
    pub initial_margin: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            theta: 1.0 / 3.0,
            fee_rate: 0.001,
            profit_saving: true,
            initial_margin: 1000.0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::invalid(format!("theta must be positive, got {}", self.theta)));
        }
        if self.theta > 1.0 {
            log::warn!("theta {} > 1 swaps the long and short regions", self.theta);
        }
        if !(self.fee_rate >= 0.0 && self.fee_rate < 1.0) {
            return Err(Error::invalid("fee rate must be in [0, 1)"));
        }
        if !(self.initial_margin > 0.0 && self.initial_margin.is_finite()) {
            return Err(Error::invalid("initial margin must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub upper: f64,
    pub lower: f64,
}

pub fn thresholds(theta: f64) -> Result<Thresholds> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must be positive, got {theta}")));
    }
    Ok(Thresholds {
        upper: 1.0 / (1.0 + theta),
        lower: theta / (1.0 + theta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Long,
    Short,
    NoAction,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Long => "long",
            Signal::Short => "short",
            Signal::NoAction => "none",
        }
    }

    fn sign(self) -> f64 {
        match self {
            Signal::Long => 1.0,
            Signal::Short => -1.0,
            Signal::NoAction => 0.0,
        }
    }
}

pub fn signal(sigma: f64, th: Thresholds) -> Signal {
    if sigma >= th.upper {
        Signal::Long
    } else if sigma <= th.lower {
        Signal::Short
    } else {
        Signal::NoAction
    }
}

/// Fraction of the margin base put on a position.
pub fn bet_size(sigma: f64) -> f64 {
    (sigma - 0.5).abs()
}

/// `|entry - stop_loss| / |take_profit - entry|`.
pub fn risk_reward(entry: f64, stop_loss: f64, take_profit: f64) -> Result<f64> {
    if take_profit == entry {
        return Err(Error::invalid("take profit equals entry; risk/reward undefined"));
    }
    Ok((entry - stop_loss).abs() / (take_profit - entry).abs())
}

/// One candle the model scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    pub t: i64,
    pub sigma: f64,
    pub close_now: f64,
    pub close_next: f64,
    pub label: f64,
}

/// Instances from consecutive closes: `sigmas[i]` scores the move from
/// `closes[i]` to `closes[i + 1]`.
pub fn instances_from_path(sigmas: &[f64], closes: &[f64]) -> Result<Vec<Instance>> {
    if closes.len() != sigmas.len() + 1 {
        return Err(Error::shape(format!(
            "{} sigmas need {} closes, got {}",
            sigmas.len(),
            sigmas.len() + 1,
            closes.len()
        )));
    }
    Ok(sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| Instance {
            t: i as i64,
            sigma,
            close_now: closes[i],
            close_next: closes[i + 1],
            label: direction_label(closes[i], closes[i + 1]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub t: i64,
    pub sigma: f64,
    pub direction: Signal,
    pub margin_fraction: f64,
    /// Margin in quote currency.
    pub margin: f64,
    pub entry: f64,
    pub exit: f64,
    pub pnl: f64,
    /// Account value after the position closes.
    pub account: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.r#fn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.r#fn)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub theta: f64,
    pub thresholds: Thresholds,
    pub fee_rate: f64,
    pub initial_margin: f64,
    pub instances: usize,
    pub trades: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub final_account_compounding: f64,
    pub final_account_profit_saving: f64,
    /// Total return in percent of the initial margin.
    pub pnl_compounding: f64,
    pub pnl_profit_saving: f64,
    pub ledger_mode: String,
    #[serde(skip)]
    pub ledger: Vec<Position>,
}

impl BacktestReport {
    pub fn ledger_csv(&self) -> String {
        let mut s = String::from("t,sigma,direction,margin,entry,exit,pnl,account\n");
        for p in &self.ledger {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                p.t,
                p.sigma,
                p.direction.as_str(),
                p.margin,
                p.entry,
                p.exit,
                p.pnl,
                p.account
            );
        }
        s
    }
}

/// Trade PnL in quote currency for a signed direction and margin.
pub fn trade_pnl(direction: Signal, margin: f64, entry: f64, exit: f64, fee_rate: f64) -> f64 {
    let r = (exit - entry) / entry;
    margin * direction.sign() * r - 2.0 * fee_rate * margin
}

pub fn run_backtest(instances: &[Instance], cfg: &StrategyConfig) -> Result<BacktestReport> {
    cfg.validate()?;
    let th = thresholds(cfg.theta)?;
    let mut compounding = cfg.initial_margin;
    let mut saving = cfg.initial_margin;
    let mut confusion = Confusion::default();
    let mut ledger = Vec::new();
    for inst in instances {
        if !(inst.sigma >= 0.0 && inst.sigma <= 1.0) {
            return Err(Error::invalid(format!("sigma {} at t={} outside [0, 1]", inst.sigma, inst.t)));
        }
        if !(inst.close_now > 0.0 && inst.close_next.is_finite()) {
            return Err(Error::invalid(format!("bad closes at t={}", inst.t)));
        }
        let dir = signal(inst.sigma, th);
        if dir == Signal::NoAction {
            continue;
        }
        let frac = bet_size(inst.sigma);
        let m_comp = frac * compounding;
        let m_save = frac * cfg.initial_margin;
        let pnl_comp = trade_pnl(dir, m_comp, inst.close_now, inst.close_next, cfg.fee_rate);
        let pnl_save = trade_pnl(dir, m_save, inst.close_now, inst.close_next, cfg.fee_rate);
        compounding += pnl_comp;
        saving += pnl_save;
        let up = inst.label == 1.0;
        match (dir, up) {
            (Signal::Long, true) => confusion.tp += 1,
            (Signal::Long, false) => confusion.fp += 1,
            (Signal::Short, false) => confusion.tn += 1,
            (Signal::Short, true) => confusion.r#fn += 1,
            (Signal::NoAction, _) => unreachable!(),
        }
        let (margin, pnl, account) = if cfg.profit_saving {
            (m_save, pnl_save, saving)
        } else {
            (m_comp, pnl_comp, compounding)
        };
        ledger.push(Position {
            t: inst.t,
            sigma: inst.sigma,
            direction: dir,
            margin_fraction: frac,
            margin,
            entry: inst.close_now,
            exit: inst.close_next,
            pnl,
            account,
        });
    }
    let pct = |acct: f64| (acct - cfg.initial_margin) / cfg.initial_margin * 100.0;
    Ok(BacktestReport {
        theta: cfg.theta,
        thresholds: th,
        fee_rate: cfg.fee_rate,
        initial_margin: cfg.initial_margin,
        instances: instances.len(),
        trades: confusion.total(),
        accuracy: confusion.accuracy(),
        precision: confusion.precision(),
        recall: confusion.recall(),
        f1: confusion.f1(),
        confusion,
        final_account_compounding: compounding,
        final_account_profit_saving: saving,
        pnl_compounding: pct(compounding),
        pnl_profit_saving: pct(saving),
        ledger_mode: if cfg.profit_saving { "profit_saving" } else { "compounding" }.into(),
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn threshold_values() {
        let t = thresholds(1.0 / 3.0).unwrap();
        assert!(close(t.upper, 0.75) && close(t.lower, 0.25));
        let t = thresholds(0.25).unwrap();
        assert!(close(t.upper, 0.8) && close(t.lower, 0.2));
        let t = thresholds(1.0).unwrap();
        assert_eq!((t.upper, t.lower), (0.5, 0.5));
        assert!(thresholds(0.0).is_err());
        assert!(thresholds(-1.0).is_err());
    }

    #[test]
    fn signals_and_sizes() {
        let t = thresholds(1.0 / 3.0).unwrap();
        assert_eq!(signal(0.9, t), Signal::Long);
        assert_eq!(signal(0.1, t), Signal::Short);
        assert_eq!(signal(0.6, t), Signal::NoAction);
        assert!(close(bet_size(0.1), 0.4));
        assert_eq!(bet_size(0.5), 0.0);
        assert!(close(bet_size(0.95), 0.45));
    }

    #[test]
    fn risk_reward_values() {
        assert!(close(risk_reward(100.0, 95.0, 115.0).unwrap(), 1.0 / 3.0));
        assert_eq!(risk_reward(100.0, 100.0, 110.0).unwrap(), 0.0);
        assert!(close(risk_reward(100.0, 90.0, 105.0).unwrap(), 2.0));
        assert!(risk_reward(100.0, 90.0, 100.0).is_err());
    }

    #[test]
    fn single_long_trade() {
        let inst = instances_from_path(&[0.8], &[100.0, 110.0]).unwrap();
        let cfg = StrategyConfig {
            theta: 1.0,
            ..Default::default()
        };
        let r = run_backtest(&inst, &cfg).unwrap();
        assert!((r.ledger[0].pnl - 29.4).abs() < 1e-9);
        assert!((r.final_account_profit_saving - 1029.4).abs() < 1e-9);
        assert_eq!(r.confusion.tp, 1);
    }

    #[test]
    fn half_sigma_trades_with_zero_size() {
        let closes: Vec<f64> = (0..6).map(|i| 100.0 + i as f64).collect();
        let inst = instances_from_path(&[0.5; 5], &closes).unwrap();
        let cfg = StrategyConfig {
            theta: 1.0,
            ..Default::default()
        };
        let r = run_backtest(&inst, &cfg).unwrap();
        assert_eq!(r.trades, 5);
        assert_eq!(r.pnl_compounding, 0.0);
        assert_eq!(r.pnl_profit_saving, 0.0);
    }

    #[test]
    fn compounding_beats_saving_when_every_trade_wins() {
        let closes: Vec<f64> = (0..11).map(|i| 100.0 * 1.01f64.powi(i)).collect();
        let inst = instances_from_path(&[0.9; 10], &closes).unwrap();
        let r = run_backtest(&inst, &StrategyConfig::default()).unwrap();
        assert!(r.pnl_compounding >= r.pnl_profit_saving);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn confusion_metrics() {
        let c = Confusion { tp: 3, fp: 1, tn: 4, r#fn: 2 };
        assert!(close(c.accuracy(), 0.7));
        assert!(close(c.precision(), 0.75));
        assert!(close(c.recall(), 0.6));
        assert!(close(c.f1(), 2.0 * 0.75 * 0.6 / 1.35));
        assert_eq!(Confusion::default().f1(), 0.0);
    }

    #[test]
    fn alignment_errors() {
        assert!(instances_from_path(&[0.5, 0.5], &[1.0, 2.0]).is_err());
        let bad = [Instance { t: 0, sigma: 1.5, close_now: 1.0, close_next: 1.0, label: 0.0 }];
        assert!(run_backtest(&bad, &StrategyConfig::default()).is_err());
    }

    #[test]
    fn ledger_csv_layout() {
        let inst = instances_from_path(&[0.9, 0.6], &[100.0, 101.0, 100.0]).unwrap();
        let r = run_backtest(&inst, &StrategyConfig::default()).unwrap();
        let csv = r.ledger_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,sigma,direction,margin,entry,exit,pnl,account"));
        assert!(lines.next().unwrap().starts_with("0,0.9,long,"));
        assert_eq!(lines.next(), None);
    }
}
