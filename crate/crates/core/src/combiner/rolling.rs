use rayon::prelude::*;

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::metrics::{information_coefficient, mean_ic, ForwardReturns, IcMethod, SplitPlan};

use super::{fit, CombinerModel};

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Clone)]
pub struct RollingResult {
    /// Test-period predictions; dates outside every test block are masked.
    pub scores: FactorMatrix,
    /// One model per fitted window, in plan order.
    pub models: Vec<CombinerModel>,
    /// Plan index of each fitted window.
    pub fitted_windows: Vec<usize>,
    /// Plan indices of windows with too few complete rows to fit; their test
    /// blocks stay masked unless another window covers them.
    pub skipped_windows: Vec<usize>,
    /// Validation mean IC of each fitted window's chosen penalty.
    pub validation_ic: Vec<f64>,
}

/// Train rows are purged so no label extends past the start of validation,
/// and validation rows so none extends past the start of test. Penalties are
/// ranked by validation mean spearman IC, ties to the earlier grid entry.
/// Where test blocks overlap, the later window's prediction wins.
pub fn rolling_fit_predict(
    factors: &[FactorMatrix],
    fwd: &ForwardReturns,
    plan: &SplitPlan,
    lambdas: &[f64],
) -> Result<RollingResult> {
    if lambdas.is_empty() {
        return Err(Error::Config("penalty grid is empty".into()));
    }
    let first = factors
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one factor is required".into()))?;
    let nd = first.n_dates();
    if let Some(w) = plan.windows.iter().find(|w| w.test.end > nd) {
        return Err(Error::Config(format!("split window ends at {} beyond {nd} dates", w.test.end)));
    }
    let h = fwd.horizon();
    let fitted: Vec<Result<(CombinerModel, f64)>> = plan
        .windows
        .par_iter()
        .map(|w| {
            let train_end = w.train.end.saturating_sub(h - 1).max(w.train.start);
            let valid_end = w.valid.end.saturating_sub(h - 1).max(w.valid.start);
            let valid_factors: Vec<FactorMatrix> = factors.iter().map(|f| f.slice_dates(w.valid.start..valid_end)).collect();
            let valid_fwd = fwd.slice_dates(w.valid.start..valid_end);
            let mut best: Option<(CombinerModel, f64)> = None;
            let mut last_err = None;
            for &lambda in lambdas {
                let model = match fit(factors, fwd, w.train.start..train_end, lambda) {
                    Ok(m) => m,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                };
                let pred = model.predict(&valid_factors)?;
                let ic = mean_ic(&information_coefficient(&pred, &valid_fwd, IcMethod::Spearman)?);
                let score = if ic.is_nan() { f64::NEG_INFINITY } else { ic };
                if best.as_ref().is_none_or(|(_, s)| score > *s) {
                    best = Some((model, score));
                }
            }
            Ok(best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Fit("no penalty could be fitted".into()))))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut kept = Vec::new();
    let mut fitted_windows = Vec::new();
    let mut skipped_windows = Vec::new();
    let mut last_fit_err = None;
    for (k, f) in fitted.into_iter().enumerate() {
        match f {
            Ok(m) => {
                kept.push(m);
                fitted_windows.push(k);
            }
            Err(e @ Error::Fit(_)) => {
                skipped_windows.push(k);
                last_fit_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(last_fit_err.unwrap_or_else(|| Error::Config("split plan has no windows".into())));
    }

    let ni = first.n_instruments();
    let mut values = vec![f64::NAN; nd * ni];
    let mut mask = vec![false; nd * ni];
    for (&k, (model, _)) in fitted_windows.iter().zip(&kept) {
        let w = &plan.windows[k];
        let block: Vec<FactorMatrix> = factors.iter().map(|f| f.slice_dates(w.test.clone())).collect();
        let pred = model.predict(&block)?;
        for (k, d) in w.test.clone().enumerate() {
            let (pv, pm) = pred.row(k);
            for i in 0..ni {
                values[d * ni + i] = pv[i];
                mask[d * ni + i] = pm[i];
            }
        }
    }
    let scores = FactorMatrix::new(first.dates_arc(), first.instruments_arc(), values, mask)?;
    let (models, validation_ic) = kept.into_iter().unzip();
    Ok(RollingResult {
        scores,
        models,
        fitted_windows,
        skipped_windows,
        validation_ic,
    })
}
