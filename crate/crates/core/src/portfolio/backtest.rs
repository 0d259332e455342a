use std::io::Write;

use chrono::NaiveDate;

use crate::dsl::{evaluate, Expr, FactorMatrix};
use crate::error::{Error, Result};
use crate::metrics::{
    information_coefficient, leg_size, max_drawdown, one_sided_turnover, sharpe, FactorReport,
    ForwardReturns, IcMethod,
};
use crate::panel::{zscore_in_place, PanelFrame};
use crate::stats;
use crate::weights::WeightSeries;

use super::{estimate_covariance, solve_weights, Budget, QpSpec, SolverOptions, TurnoverMode};

/// Where per-date instrument scores come from.
#[derive(Debug, Clone)]
pub enum ScoreSource {
    /// Evaluate a factor expression on the panel.
    Expr(Expr),
    /// A precomputed surface on the panel's axes, such as model predictions.
    Surface(FactorMatrix),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    /// Every `k`-th date starting at the first.
    Every(usize),
    /// Explicit dates, each of which must be a panel date.
    Dates(Vec<NaiveDate>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRule {
    pub risk_cap: f64,
    pub turnover_cap: f64,
    pub weight_cap: f64,
    pub budget: Budget,
    pub turnover_mode: TurnoverMode,
    pub shrinkage: f64,
    /// Trailing daily returns used for the covariance.
    pub lookback: usize,
    pub solver: SolverOptions,
}

impl Default for OptimizerRule {
    fn default() -> Self {
        Self {
            risk_cap: 0.0004,
            turnover_cap: 0.1,
            weight_cap: 0.1,
            budget: Budget::None,
            turnover_mode: TurnoverMode::Elementwise,
            shrinkage: 0.1,
            lookback: 60,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightRule {
    /// Equal-weight long top / short bottom fraction.
    Quantile(f64),
    /// Constrained mean-variance weights on cross-sectionally standardized scores.
    Optimizer(OptimizerRule),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub price_field: String,
    pub schedule: Schedule,
    pub rule: WeightRule,
    pub cost_rate: f64,
    pub periods_per_year: f64,
    pub ic_method: IcMethod,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            price_field: "close".into(),
            schedule: Schedule::Every(1),
            rule: WeightRule::Quantile(0.1),
            cost_rate: 0.0,
            periods_per_year: crate::metrics::DEFAULT_PERIODS_PER_YEAR,
            ic_method: IcMethod::Spearman,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub dates: Vec<NaiveDate>,
    /// Equity at each panel date, starting at 1.
    pub equity: Vec<f64>,
    /// Net return of the period from date `d` to `d + 1`.
    pub period_returns: Vec<f64>,
    pub weights: WeightSeries,
    pub turnover: Vec<f64>,
    pub report: FactorReport,
    /// Rebalance dates where no weights could be formed; the previous book was held.
    pub skipped: Vec<NaiveDate>,
}

impl BacktestResult {
    pub fn write_equity_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "date,equity")?;
        for (d, e) in self.dates.iter().zip(&self.equity) {
            writeln!(out, "{},{e}", d.format("%Y-%m-%d"))?;
        }
        Ok(())
    }
}

/// One-period simple returns; row `d` is `p(d) / p(d - 1) - 1`, row 0 masked.
pub fn period_returns(panel: &PanelFrame, price_field: &str) -> Result<FactorMatrix> {
    let f = panel.field_index(price_field)?;
    Ok(FactorMatrix::from_fn(panel.dates_arc(), panel.instruments_arc(), |d, i| {
        if d == 0 {
            return None;
        }
        let p0 = panel.get(d - 1, i, f)?;
        let p1 = panel.get(d, i, f)?;
        (p0 != 0.0).then(|| p1 / p0 - 1.0)
    }))
}

fn rebalance_indices(panel: &PanelFrame, schedule: &Schedule) -> Result<Vec<usize>> {
    let nd = panel.n_dates();
    match schedule {
        Schedule::Every(0) => Err(Error::Config("rebalance period must be at least 1".into())),
        Schedule::Every(k) => Ok((0..nd).step_by(*k).collect()),
        Schedule::Dates(dates) => {
            let mut idx = dates
                .iter()
                .map(|d| {
                    panel.dates().binary_search(d).map_err(|_| {
                        Error::InvalidInput(format!("rebalance date {d} is not a panel date"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            Ok(idx)
        }
    }
}

/// Walk the panel forward, rebalancing on the schedule and holding weights
/// fixed in between.
///
/// Scores at a rebalance date use data up to that date only. The period from
/// `d` to `d + 1` earns `wᵀ r(d + 1)` on the weights held at `d`, less
/// `cost_rate × turnover` when `d` is a rebalance date. The final date has no
/// following period and is never a rebalance.
pub fn run_backtest(
    panel: &PanelFrame,
    source: &ScoreSource,
    config: &BacktestConfig,
) -> Result<BacktestResult> {
    if !(config.cost_rate >= 0.0) {
        return Err(Error::Config(format!("cost rate must be non-negative, got {}", config.cost_rate)));
    }
    let scores = match source {
        ScoreSource::Expr(e) => evaluate(e, panel)?,
        ScoreSource::Surface(s) => {
            if s.dates() != panel.dates() || s.instruments() != panel.instruments() {
                return Err(Error::AxisMismatch("score surface does not match panel axes".into()));
            }
            s.clone()
        }
    };
    let rets = period_returns(panel, &config.price_field)?;
    let nd = panel.n_dates();
    let ni = panel.n_instruments();
    let rebalance: Vec<usize> = rebalance_indices(panel, &config.schedule)?
        .into_iter()
        .filter(|&d| d + 1 < nd)
        .collect();

    let mut weights = WeightSeries::new(panel.instruments_arc());
    let mut turnovers = Vec::new();
    let mut skipped = Vec::new();
    let mut held = vec![0.0; ni];
    let mut equity = Vec::with_capacity(nd);
    let mut period = Vec::with_capacity(nd.saturating_sub(1));
    equity.push(1.0);
    let mut next_rebalance = rebalance.iter().peekable();
    for d in 0..nd.saturating_sub(1) {
        let mut cost = 0.0;
        if next_rebalance.peek() == Some(&&d) {
            next_rebalance.next();
            match target_weights(&scores, &rets, d, &held, &config.rule)? {
                Some(w) => {
                    let t = one_sided_turnover(&held, &w);
                    cost = config.cost_rate * t;
                    turnovers.push(t);
                    weights.push(panel.dates()[d], w.clone())?;
                    held = w;
                }
                None => skipped.push(panel.dates()[d]),
            }
        }
        let gross: f64 = (0..ni)
            .filter(|&i| held[i] != 0.0)
            .map(|i| held[i] * rets.get(d + 1, i).unwrap_or(0.0))
            .sum();
        let net = gross - cost;
        period.push(net);
        equity.push(equity[d] * (1.0 + net));
    }

    let fwd = ForwardReturns::from_prices(panel, &config.price_field, 1)?;
    let ic_series = information_coefficient(&scores, &fwd, config.ic_method)?;
    let ic_series: Vec<Option<f64>> = (0..nd)
        .map(|d| if rebalance.binary_search(&d).is_ok() { ic_series[d] } else { None })
        .collect();
    let report = summarize(ic_series, &period, &turnovers, config.periods_per_year);
    Ok(BacktestResult {
        dates: panel.dates().to_vec(),
        equity,
        period_returns: period,
        weights,
        turnover: turnovers,
        report,
        skipped,
    })
}

fn summarize(ic_series: Vec<Option<f64>>, period: &[f64], turnovers: &[f64], ppy: f64) -> FactorReport {
    let ics: Vec<f64> = ic_series.iter().flatten().copied().collect();
    let ic_mean = if ics.is_empty() { f64::NAN } else { stats::mean(&ics) };
    let ic_std = if ics.len() < 2 { f64::NAN } else { stats::sample_std(&ics) };
    FactorReport {
        n_dates_evaluated: ics.len(),
        ic_series,
        ic_mean,
        ic_std,
        icir: if ic_std > 0.0 { ic_mean / ic_std } else { f64::NAN },
        annualized_return: if period.is_empty() { f64::NAN } else { stats::mean(period) * ppy },
        sharpe: sharpe(period, ppy).unwrap_or(f64::NAN),
        max_drawdown: max_drawdown(period),
        avg_turnover: if turnovers.is_empty() { f64::NAN } else { stats::mean(turnovers) },
        max_abs_corr_to_base: 0.0,
    }
}

fn target_weights(
    scores: &FactorMatrix,
    rets: &FactorMatrix,
    d: usize,
    held: &[f64],
    rule: &WeightRule,
) -> Result<Option<Vec<f64>>> {
    let ni = scores.n_instruments();
    let (sv, sm) = scores.row(d);
    match rule {
        WeightRule::Quantile(q) => {
            if !(*q > 0.0 && *q <= 0.5) {
                return Err(Error::Config(format!("quantile must lie in (0, 0.5], got {q}")));
            }
            let mut idx: Vec<usize> = (0..ni).filter(|&i| sm[i]).collect();
            let n = idx.len();
            if n < 2 || idx.windows(2).all(|w| sv[w[0]] == sv[w[1]]) {
                return Ok(None);
            }
            idx.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]).then(a.cmp(&b)));
            let k = leg_size(*q, n);
            let mut w = vec![0.0; ni];
            for &i in &idx[..k] {
                w[i] = -1.0 / k as f64;
            }
            for &i in &idx[n - k..] {
                w[i] = 1.0 / k as f64;
            }
            Ok(Some(w))
        }
        WeightRule::Optimizer(rule) => {
            let mut values = sv.to_vec();
            let mut mask = sm.to_vec();
            zscore_in_place(&mut values, &mut mask);
            if !mask.iter().any(|m| *m) {
                return Ok(None);
            }
            let start = (d + 1).saturating_sub(rule.lookback).max(1);
            if d + 1 < start + 2 {
                return Ok(None);
            }
            let sigma = estimate_covariance(&rets.slice_dates(start..d + 1), rule.shrinkage)?;
            let expected: Vec<f64> = (0..ni).map(|i| if mask[i] { values[i] } else { 0.0 }).collect();
            let spec = QpSpec {
                expected_returns: expected,
                sigma,
                risk_cap: rule.risk_cap,
                turnover_cap: rule.turnover_cap,
                weight_cap: rule.weight_cap,
                prev_weights: held.iter().map(|w| w.max(0.0)).collect(),
                budget: rule.budget,
                turnover_mode: rule.turnover_mode,
            };
            solve_weights(&spec, &rule.solver).map(Some)
        }
    }
}
