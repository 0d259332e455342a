use crate::dsl::FactorMatrix;
use crate::error::Result;
use crate::stats;

use super::ForwardReturns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IcMethod {
    Pearson,
    #[default]
    Spearman,
}

impl IcMethod {
    pub fn correlate(self, x: &[f64], y: &[f64]) -> Option<f64> {
        match self {
            IcMethod::Pearson => stats::pearson(x, y),
            IcMethod::Spearman => stats::spearman(x, y),
        }
    }
}

impl std::str::FromStr for IcMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" => Ok(IcMethod::Pearson),
            "spearman" => Ok(IcMethod::Spearman),
            other => Err(crate::Error::Config(format!("unknown IC method `{other}`"))),
        }
    }
}

/// Minimum joint observations for a per-date correlation.
pub const MIN_IC_OBSERVATIONS: usize = 3;

/// Per-date correlation between factor and forward returns over jointly observed instruments.
pub fn information_coefficient(
    factor: &FactorMatrix,
    fwd: &ForwardReturns,
    method: IcMethod,
) -> Result<Vec<Option<f64>>> {
    cross_sectional_correlation(factor, fwd.surface(), method)
}

fn cross_sectional_correlation(
    a: &FactorMatrix,
    b: &FactorMatrix,
    method: IcMethod,
) -> Result<Vec<Option<f64>>> {
    a.check_aligned(b)?;
    let mut x = Vec::with_capacity(a.n_instruments());
    let mut y = Vec::with_capacity(a.n_instruments());
    Ok((0..a.n_dates())
        .map(|d| {
            let (av, am) = a.row(d);
            let (bv, bm) = b.row(d);
            x.clear();
            y.clear();
            for i in 0..av.len() {
                if am[i] && bm[i] {
                    x.push(av[i]);
                    y.push(bv[i]);
                }
            }
            if x.len() < MIN_IC_OBSERVATIONS {
                return None;
            }
            method.correlate(&x, &y)
        })
        .collect())
}

/// Mean of the defined entries; NaN when none are defined.
pub fn mean_ic(series: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = series.iter().flatten().copied().collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        stats::mean(&vals)
    }
}

/// How many independent decisions a year holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Breadth {
    /// One decision per rebalance.
    #[default]
    Rebalances,
    /// One decision per instrument per rebalance.
    Decisions,
}

impl Breadth {
    pub fn count(self, rebalances_per_year: f64, instruments: usize) -> f64 {
        match self {
            Breadth::Rebalances => rebalances_per_year,
            Breadth::Decisions => rebalances_per_year * instruments as f64,
        }
    }
}

impl std::str::FromStr for Breadth {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rebalances" => Ok(Breadth::Rebalances),
            "decisions" => Ok(Breadth::Decisions),
            other => Err(crate::Error::Config(format!("unknown breadth `{other}`"))),
        }
    }
}

/// Information ratio predicted by the fundamental law of active management.
pub fn fundamental_law_ir(ic: f64, breadth: f64) -> f64 {
    ic * breadth.sqrt()
}
