use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::stats;
use crate::weights::WeightSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureReport {
    pub dates: Vec<NaiveDate>,
    /// `exposures[t][j] = Σ_i w_i(t) · style_j(t, i)` over observed style cells.
    pub exposures: Vec<Vec<f64>>,
    /// Share of portfolio return variance explained by the exposures; `None`
    /// when the regression is degenerate.
    pub r_squared: Option<f64>,
}

/// Style exposures of each weight vector and the R² of regressing
/// `portfolio_returns` (one per weight date) on the exposure time series.
pub fn exposure_decomposition(
    weights: &WeightSeries,
    styles: &[FactorMatrix],
    portfolio_returns: &[f64],
) -> Result<ExposureReport> {
    if portfolio_returns.len() != weights.len() {
        return Err(Error::AxisMismatch(format!(
            "{} portfolio returns for {} weight dates",
            portfolio_returns.len(),
            weights.len()
        )));
    }
    for s in styles {
        if s.instruments() != weights.instruments() {
            return Err(Error::AxisMismatch("style instruments differ from weight instruments".into()));
        }
    }
    let mut exposures = Vec::with_capacity(weights.len());
    for (date, w) in weights.dates().iter().zip(weights.weights()) {
        let row = styles
            .iter()
            .map(|s| {
                let d = s.dates().binary_search(date).map_err(|_| {
                    Error::AxisMismatch(format!("style surface has no date {date}"))
                })?;
                let (v, m) = s.row(d);
                Ok((0..w.len()).filter(|&i| m[i]).map(|i| w[i] * v[i]).sum())
            })
            .collect::<Result<Vec<f64>>>()?;
        exposures.push(row);
    }
    let r_squared = r_squared(&exposures, portfolio_returns, styles.len());
    Ok(ExposureReport {
        dates: weights.dates().to_vec(),
        exposures,
        r_squared,
    })
}

fn r_squared(x: &[Vec<f64>], y: &[f64], k: usize) -> Option<f64> {
    let m = y.len();
    if k == 0 || m < k + 2 || y.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if stats::is_degenerate(y, stats::sample_std(y)) {
        return None;
    }
    let ybar = stats::mean(y);
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let design = DMatrix::from_fn(m, k + 1, |r, c| if c == 0 { 1.0 } else { x[r][c - 1] });
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= smax * 1e-10 {
        return None;
    }
    let coef = svd.solve(&DVector::from_column_slice(y), 0.0).ok()?;
    let fitted = design * coef;
    let rss: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let r2 = 1.0 - rss / tss;
    r2.is_finite().then_some(r2.clamp(0.0, 1.0))
}
