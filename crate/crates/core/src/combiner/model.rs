use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::metrics::ForwardReturns;
use crate::stats;

/// Ridge-regularized linear combination of standardized factors.
///
/// Prediction is `intercept + Σ_j coefficients[j] · (x_j − means[j]) / stds[j]`
/// with the standardization frozen at fit time.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerModel {
    pub factor_ids: Vec<String>,
    /// Coefficients on standardized factors.
    pub coefficients: Vec<f64>,
    /// Mean training label.
    pub intercept: f64,
    pub lambda: f64,
    /// Date indices whose rows trained the model.
    pub fit_window: Range<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub(crate) fn default_ids(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("f{j}")).collect()
}

/// Pooled rows `(x, y)` over `dates` where every factor and the label are observed.
pub(crate) fn pooled_rows(
    factors: &[FactorMatrix],
    fwd: &ForwardReturns,
    dates: Range<usize>,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let y = fwd.surface();
    let ni = y.n_instruments();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in dates {
        for i in 0..ni {
            let Some(label) = y.get(d, i) else { continue };
            let row: Option<Vec<f64>> = factors.iter().map(|f| f.get(d, i)).collect();
            if let Some(row) = row {
                xs.push(row);
                ys.push(label);
            }
        }
    }
    (xs, ys)
}

fn check_inputs(factors: &[FactorMatrix], fwd: &ForwardReturns) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::InvalidInput("at least one factor is required".into()));
    }
    for f in factors {
        f.check_aligned(fwd.surface())?;
    }
    Ok(())
}

/// Closed-form ridge fit on the rows of `window` (date indices).
///
/// Solves `(ZᵀZ/m + λI) β = Zᵀ(y − ȳ)/m` where `Z` holds the per-factor
/// standardized columns and `m` the number of rows.
pub fn fit(
    factors: &[FactorMatrix],
    fwd: &ForwardReturns,
    window: Range<usize>,
    lambda: f64,
) -> Result<CombinerModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("ridge penalty must be non-negative, got {lambda}")));
    }
    check_inputs(factors, fwd)?;
    let k = factors.len();
    let (xs, ys) = pooled_rows(factors, fwd, window.clone());
    let m = ys.len();
    if m < k + 2 {
        return Err(Error::Fit(format!("{m} usable rows in window, need at least {}", k + 2)));
    }
    let mut means = vec![0.0; k];
    let mut stds = vec![0.0; k];
    for j in 0..k {
        let col: Vec<f64> = xs.iter().map(|r| r[j]).collect();
        means[j] = stats::mean(&col);
        stds[j] = stats::sample_std(&col);
        if stats::is_degenerate(&col, stds[j]) {
            return Err(Error::Fit(format!("factor {j} is constant over the fit window")));
        }
    }
    let ybar = stats::mean(&ys);
    let z = DMatrix::from_fn(m, k, |r, j| (xs[r][j] - means[j]) / stds[j]);
    let yc = DVector::from_iterator(m, ys.iter().map(|v| v - ybar));
    let mut gram = z.transpose() * &z / m as f64;
    for j in 0..k {
        gram[(j, j)] += lambda;
    }
    let rhs = z.transpose() * yc / m as f64;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Fit("design matrix is singular".into()))?,
    };
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit("design matrix is singular".into()));
    }
    Ok(CombinerModel {
        factor_ids: default_ids(k),
        coefficients: beta.iter().copied().collect(),
        intercept: ybar,
        lambda,
        fit_window: window,
        means,
        stds,
    })
}

impl CombinerModel {
    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.coefficients.len() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} coefficients",
                ids.len(),
                self.coefficients.len()
            )));
        }
        self.factor_ids = ids;
        Ok(self)
    }

    /// Coefficients and intercept in the factors' original units.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let b: Vec<f64> = self.coefficients.iter().zip(&self.stds).map(|(c, s)| c / s).collect();
        let a = self.intercept - b.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        (b, a)
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn predict_cell(&self, x: &[f64]) -> f64 {
        let mut s = self.intercept;
        for j in 0..x.len() {
            s += self.coefficients[j] * (x[j] - self.means[j]) / self.stds[j];
        }
        s
    }

    /// Score surface; a cell is masked when any input is masked.
    pub fn predict(&self, factors: &[FactorMatrix]) -> Result<FactorMatrix> {
        if factors.len() != self.coefficients.len() {
            return Err(Error::InvalidInput(format!(
                "model has {} factors, got {}",
                self.coefficients.len(),
                factors.len()
            )));
        }
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidInput("at least one factor is required".into()))?;
        for f in &factors[1..] {
            first.check_aligned(f)?;
        }
        let mut x = vec![0.0; factors.len()];
        Ok(FactorMatrix::from_fn(first.dates_arc(), first.instruments_arc(), |d, i| {
            for (j, f) in factors.iter().enumerate() {
                x[j] = f.get(d, i)?;
            }
            Some(self.predict_cell(&x))
        }))
    }

    /// Like [`predict`](Self::predict) but checks the factor ids first.
    pub fn predict_named(&self, ids: &[String], factors: &[FactorMatrix]) -> Result<FactorMatrix> {
        if ids != self.factor_ids.as_slice() {
            return Err(Error::InvalidInput(format!(
                "factor ids {:?} do not match model ids {:?}",
                ids, self.factor_ids
            )));
        }
        self.predict(factors)
    }

    /// Header `intercept,<ids>` and one row of raw-unit coefficients.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let (b, a) = self.raw_coefficients();
        let header: Vec<String> = std::iter::once("intercept".to_string())
            .chain(self.factor_ids.iter().map(|s| crate::metrics::csv_escape(s)))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        let row: Vec<String> = std::iter::once(a).chain(b).map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))
    }
}
