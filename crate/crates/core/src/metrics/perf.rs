use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::weights::WeightSeries;

use super::ForwardReturns;

/// Daily returns and positions of an equal-weight quantile long-short book.
#[derive(Debug, Clone)]
pub struct LongShort {
    /// One entry per date; `None` where the date was skipped.
    pub returns: Vec<Option<f64>>,
    pub weights: WeightSeries,
    pub turnover: Vec<f64>,
    /// Indices of skipped dates.
    pub skipped: Vec<usize>,
}

impl LongShort {
    pub fn realized(&self) -> Vec<f64> {
        self.returns.iter().flatten().copied().collect()
    }
}

/// Long the top `ceil(q n)` and short the bottom `ceil(q n)` instruments per date.
///
/// Instruments are ordered by (factor, instrument index); the leg size is
/// capped at `n / 2` so the legs never overlap. Dates with fewer than two
/// evaluable instruments or a constant factor cross-section are skipped and
/// the previous book is kept.
pub fn quantile_longshort_returns(
    factor: &FactorMatrix,
    fwd: &ForwardReturns,
    q: f64,
    cost_rate: f64,
) -> Result<LongShort> {
    if !(q > 0.0 && q <= 0.5) {
        return Err(Error::InvalidInput(format!("quantile must lie in (0, 0.5], got {q}")));
    }
    if cost_rate < 0.0 {
        return Err(Error::InvalidInput(format!("cost rate must be non-negative, got {cost_rate}")));
    }
    let r = fwd.surface();
    factor.check_aligned(r)?;
    let ni = factor.n_instruments();
    let mut weights = WeightSeries::new(factor.instruments_arc());
    let mut returns = Vec::with_capacity(factor.n_dates());
    let mut turnovers = Vec::new();
    let mut skipped = Vec::new();
    let mut prev = vec![0.0; ni];
    for d in 0..factor.n_dates() {
        let (fv, fm) = factor.row(d);
        let (rv, rm) = r.row(d);
        let mut idx: Vec<usize> = (0..ni).filter(|&i| fm[i] && rm[i]).collect();
        let n = idx.len();
        let constant = idx.windows(2).all(|w| fv[w[0]] == fv[w[1]]);
        if n < 2 || constant {
            returns.push(None);
            skipped.push(d);
            continue;
        }
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]).then(a.cmp(&b)));
        let k = leg_size(q, n);
        let mut w = vec![0.0; ni];
        for &i in &idx[..k] {
            w[i] = -1.0 / k as f64;
        }
        for &i in &idx[n - k..] {
            w[i] = 1.0 / k as f64;
        }
        let t = one_sided_turnover(&prev, &w);
        let gross: f64 = (0..ni).filter(|&i| w[i] != 0.0).map(|i| w[i] * rv[i]).sum();
        returns.push(Some(gross - cost_rate * t));
        turnovers.push(t);
        weights.push(factor.dates()[d], w.clone())?;
        prev = w;
    }
    Ok(LongShort {
        returns,
        weights,
        turnover: turnovers,
        skipped,
    })
}

pub(crate) fn leg_size(q: f64, n: usize) -> usize {
    let k = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    k.min(n / 2).max(1)
}

pub(crate) fn one_sided_turnover(prev: &[f64], next: &[f64]) -> f64 {
    0.5 * prev.iter().zip(next).map(|(a, b)| (b - a).abs()).sum::<f64>()
}

/// Annualized Sharpe ratio, `mean / std * sqrt(periods_per_year)` with sample std.
pub fn sharpe(returns: &[f64], periods_per_year: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sharpe needs at least 2 observations, got {}",
            returns.len()
        )));
    }
    // Welford
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, r) in returns.iter().enumerate() {
        let delta = r - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (r - mean);
    }
    let std = (m2 / (returns.len() - 1) as f64).sqrt();
    if crate::stats::is_degenerate(returns, std) {
        return Err(Error::DegenerateVariance("return series has zero variance".into()));
    }
    Ok(mean / std * periods_per_year.sqrt())
}

/// Largest peak-to-trough loss of the compounded equity curve starting at 1.
pub fn max_drawdown(returns: &[f64]) -> f64 {
    let mut equity = 1.0_f64;
    let mut peak = 1.0_f64;
    let mut worst = 0.0_f64;
    for r in returns {
        equity *= 1.0 + r;
        if equity > peak {
            peak = equity;
        }
        let dd = 1.0 - equity / peak;
        if dd > worst {
            worst = dd;
        }
    }
    worst.min(1.0)
}

/// `0.5 * sum |w_t - w_{t-1}|`, the first vector compared against all-zero.
pub fn turnover(weights: &WeightSeries) -> Vec<f64> {
    let n = weights.instruments().len();
    let mut prev = vec![0.0; n];
    weights
        .weights()
        .iter()
        .map(|w| {
            let t = one_sided_turnover(&prev, w);
            prev.clone_from(w);
            t
        })
        .collect()
}

/// Largest absolute pooled Pearson correlation between `candidate` and any base surface.
pub fn redundancy(candidate: &FactorMatrix, base: &[FactorMatrix]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for b in base {
        candidate.check_aligned(b)?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for ((cv, cm), (bv, bm)) in candidate
            .values()
            .iter()
            .zip(candidate.mask())
            .zip(b.values().iter().zip(b.mask()))
        {
            if *cm && *bm {
                x.push(*cv);
                y.push(*bv);
            }
        }
        if let Some(c) = crate::stats::pearson(&x, &y) {
            worst = worst.max(c.abs());
        }
    }
    Ok(worst)
}
