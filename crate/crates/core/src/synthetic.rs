//! Seeded synthetic markets for tests, examples and benchmarks.

use std::sync::Arc;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::dsl::{evaluate, parse, Expr, FactorMatrix};
use crate::error::Result;
use crate::metrics::ForwardReturns;
use crate::panel::{zscore_in_place, PanelFrame};
use crate::rng;

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn business_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn instrument_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("S{i:04}")).collect()
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSpec {
    pub n_dates: usize,
    pub n_instruments: usize,
    pub n_sectors: usize,
    /// Probability that any single cell is unobserved.
    pub missing_fraction: f64,
    pub seed: u64,
}

impl Default for MarketSpec {
    fn default() -> Self {
        Self {
            n_dates: 250,
            n_instruments: 50,
            n_sectors: 5,
            missing_fraction: 0.0,
            seed: 1,
        }
    }
}

/// Random-walk market with fields `close`, `open`, `high`, `low`, `volume` and
/// an integer-coded `sector`.
pub fn generate_market(spec: &MarketSpec) -> Result<PanelFrame> {
    let (nd, ni) = (spec.n_dates, spec.n_instruments);
    let mut r = rng::stream(spec.seed, "synthetic/market", &[]);
    let vol_dist = LogNormal::new(12.0, 0.5).expect("valid lognormal");
    let mut close = vec![0.0; nd * ni];
    let mut open = vec![0.0; nd * ni];
    let mut high = vec![0.0; nd * ni];
    let mut low = vec![0.0; nd * ni];
    let mut volume = vec![0.0; nd * ni];
    let sectors: Vec<f64> = (0..ni).map(|_| r.random_range(0..spec.n_sectors.max(1)) as f64).collect();
    let sigma: Vec<f64> = (0..ni).map(|_| 0.01 + 0.02 * r.random::<f64>()).collect();
    for d in 0..nd {
        for i in 0..ni {
            let k = d * ni + i;
            let prev = if d == 0 { 20.0 + 80.0 * r.random::<f64>() } else { close[k - ni] };
            let gap: f64 = r.sample::<f64, _>(StandardNormal) * sigma[i] * 0.3;
            let ret: f64 = r.sample::<f64, _>(StandardNormal) * sigma[i];
            open[k] = prev * (1.0 + gap);
            close[k] = prev * (1.0 + ret);
            let span = (open[k] - close[k]).abs() + prev * sigma[i] * r.random::<f64>();
            high[k] = open[k].max(close[k]) + 0.5 * span;
            low[k] = open[k].min(close[k]) - 0.5 * span;
            volume[k] = vol_dist.sample(&mut r);
        }
    }
    let missing: Vec<bool> = (0..nd * ni * 6).map(|_| r.random::<f64>() < spec.missing_fraction).collect();
    let fields = ["close", "high", "low", "open", "sector", "volume"];
    PanelFrame::from_fn(
        business_dates(default_start(), nd),
        instrument_names(ni),
        fields.iter().map(|s| s.to_string()).collect(),
        |d, i, f| {
            let k = d * ni + i;
            if fields[f] != "sector" && missing[f * nd * ni + k] {
                return None;
            }
            Some(match fields[f] {
                "close" => close[k],
                "high" => high[k],
                "low" => low[k],
                "open" => open[k],
                "sector" => sectors[i],
                _ => volume[k],
            })
        },
    )
}

/// The factor planted into [`planted_market`] returns.
pub const PLANTED_FACTOR: &str = "-ts_corr(rank(close), rank(volume), 5)";

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub n_dates: usize,
    pub n_instruments: usize,
    pub seed: u64,
    /// Weight on the standardized planted factor.
    pub signal: f64,
    /// Weight on independent standard normal noise.
    pub noise: f64,
    /// Scale of the resulting one-period returns.
    pub return_scale: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            n_dates: 300,
            n_instruments: 100,
            seed: 7,
            signal: 0.75,
            noise: 0.25,
            return_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedMarket {
    pub panel: PanelFrame,
    pub fwd: ForwardReturns,
    pub planted: Expr,
}

/// Market whose next-period returns are `scale · (signal · z + noise · ε)`,
/// where `z` is the cross-sectionally standardized planted factor at the
/// current date and `ε` is standard normal. Dates where the factor is not yet
/// defined get noise only. Prices are built forward from those returns, so
/// the factor at `t` depends only on data up to `t`.
pub fn planted_market(spec: &PlantedSpec) -> Result<PlantedMarket> {
    let planted = parse(PLANTED_FACTOR).expect("planted factor parses");
    let (nd, ni) = (spec.n_dates, spec.n_instruments);
    let mut r = rng::stream(spec.seed, "synthetic/planted", &[]);
    let vol_dist = LogNormal::new(12.0, 0.6).expect("valid lognormal");
    let volume: Vec<f64> = (0..nd * ni).map(|_| vol_dist.sample(&mut r)).collect();
    let mut close = vec![f64::NAN; nd * ni];
    for c in close.iter_mut().take(ni) {
        *c = 20.0 + 80.0 * r.random::<f64>();
    }
    let dates = business_dates(default_start(), nd);
    let names = instrument_names(ni);
    let build = |close: &[f64], upto: usize| {
        PanelFrame::from_fn(
            dates[..upto].to_vec(),
            names.clone(),
            vec!["close".into(), "volume".into()],
            |d, i, f| Some(if f == 0 { close[d * ni + i] } else { volume[d * ni + i] }),
        )
    };
    for t in 0..nd.saturating_sub(1) {
        let signal = evaluate(&planted, &build(&close, t + 1)?)?;
        let (sv, sm) = signal.row(t);
        let mut z = sv.to_vec();
        let mut zm = sm.to_vec();
        zscore_in_place(&mut z, &mut zm);
        for i in 0..ni {
            let eps: f64 = r.sample(StandardNormal);
            let s = if zm[i] { z[i] } else { 0.0 };
            let ret = spec.return_scale * (spec.signal * s + spec.noise * eps);
            close[(t + 1) * ni + i] = close[t * ni + i] * (1.0 + ret);
        }
    }
    let panel = build(&close, nd)?;
    let fwd = ForwardReturns::from_prices(&panel, "close", 1)?;
    Ok(PlantedMarket { panel, fwd, planted })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcExperimentSpec {
    pub n_dates: usize,
    pub n_instruments: usize,
    pub seed: u64,
    /// Target per-date spearman correlation between factor and forward return.
    pub target_ic: f64,
    pub return_scale: f64,
}

impl Default for IcExperimentSpec {
    fn default() -> Self {
        Self {
            n_dates: 252,
            n_instruments: 500,
            seed: 11,
            target_ic: 0.1,
            return_scale: 0.02,
        }
    }
}

/// Mixing weight `z` such that `z·r + (1 − z)·ε`, with `r` and `ε`
/// independent standard normals, has spearman correlation `target` with `r`.
pub fn mixing_weight_for_ic(target: f64) -> f64 {
    // spearman = (6 / π) asin(ρ / 2) for bivariate normals
    let rho = 2.0 * (std::f64::consts::PI * target / 6.0).sin();
    rho / ((1.0 - rho * rho).sqrt() + rho)
}

/// Factor `z·r + (1 − z)·ε` against forward returns `scale·r`, with `z` from
/// [`mixing_weight_for_ic`]. Every one of the `n_dates` dates is evaluable.
pub fn ic_experiment(spec: &IcExperimentSpec) -> Result<(FactorMatrix, ForwardReturns)> {
    let (nd, ni) = (spec.n_dates, spec.n_instruments);
    let z = mixing_weight_for_ic(spec.target_ic);
    let mut r = rng::stream(spec.seed, "synthetic/ic-experiment", &[]);
    let dates: Arc<[NaiveDate]> = business_dates(default_start(), nd + 1).into();
    let names: Arc<[String]> = instrument_names(ni).into();
    let mut ret = vec![0.0; (nd + 1) * ni];
    let mut fac = vec![0.0; (nd + 1) * ni];
    for k in 0..nd * ni {
        let a: f64 = r.sample(StandardNormal);
        let e: f64 = r.sample(StandardNormal);
        ret[k] = spec.return_scale * a;
        fac[k] = z * a + (1.0 - z) * e;
    }
    let mask = vec![true; (nd + 1) * ni];
    let factor = FactorMatrix::new(dates.clone(), names.clone(), fac, mask.clone())?;
    let surface = FactorMatrix::new(dates, names, ret, mask)?;
    let fwd = ForwardReturns::from_surface(surface, 1)?;
    Ok((factor.slice_dates(0..nd), fwd.slice_dates(0..nd)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub n_dates: usize,
    pub n_instruments: usize,
    pub seed: u64,
    pub noise: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            n_dates: 400,
            n_instruments: 80,
            seed: 5,
            noise: 1.0,
        }
    }
}

/// Two standard normal factors whose loadings on forward returns rotate over
/// time: `β₁(t) = cos(πt/T)`, `β₂(t) = sin(πt/T)`.
pub fn drifting_factors(spec: &DriftSpec) -> Result<(Vec<FactorMatrix>, ForwardReturns)> {
    let (nd, ni) = (spec.n_dates, spec.n_instruments);
    let mut r = rng::stream(spec.seed, "synthetic/drift", &[]);
    let dates: Arc<[NaiveDate]> = business_dates(default_start(), nd).into();
    let names: Arc<[String]> = instrument_names(ni).into();
    let mut f1 = vec![0.0; nd * ni];
    let mut f2 = vec![0.0; nd * ni];
    let mut y = vec![0.0; nd * ni];
    for d in 0..nd {
        let phase = std::f64::consts::PI * d as f64 / nd as f64;
        let (b1, b2) = (phase.cos(), phase.sin());
        for i in 0..ni {
            let k = d * ni + i;
            f1[k] = r.sample(StandardNormal);
            f2[k] = r.sample(StandardNormal);
            let e: f64 = r.sample(StandardNormal);
            y[k] = 0.01 * (b1 * f1[k] + b2 * f2[k] + spec.noise * e);
        }
    }
    let mask = vec![true; nd * ni];
    let a = FactorMatrix::new(dates.clone(), names.clone(), f1, mask.clone())?;
    let b = FactorMatrix::new(dates.clone(), names.clone(), f2, mask.clone())?;
    let fwd = ForwardReturns::from_surface(FactorMatrix::new(dates, names, y, mask)?, 1)?;
    Ok((vec![a, b], fwd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{information_coefficient, mean_ic, IcMethod};

    #[test]
    fn market_is_deterministic_and_shaped() {
        let spec = MarketSpec { n_dates: 20, n_instruments: 7, ..MarketSpec::default() };
        let a = generate_market(&spec).unwrap();
        let b = generate_market(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (20, 7, 6));
        assert!(a.dates().iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }

    #[test]
    fn planted_returns_follow_factor() {
        let spec = PlantedSpec { n_dates: 60, n_instruments: 30, ..PlantedSpec::default() };
        let m = planted_market(&spec).unwrap();
        let f = evaluate(&m.planted, &m.panel).unwrap();
        let ic = mean_ic(&information_coefficient(&f, &m.fwd, IcMethod::Spearman).unwrap());
        assert!(ic > 0.8, "planted IC {ic}");
    }

    #[test]
    fn mixing_weight_hits_target() {
        let (f, fwd) = ic_experiment(&IcExperimentSpec { n_dates: 40, ..IcExperimentSpec::default() }).unwrap();
        let ic = mean_ic(&information_coefficient(&f, &fwd, IcMethod::Spearman).unwrap());
        assert!((ic - 0.1).abs() < 0.02, "{ic}");
        assert!((mixing_weight_for_ic(0.0)).abs() < 1e-15);
    }
}
