//! Factor evaluation against forward returns.

mod ic;
mod perf;
mod returns;
mod splits;

use std::io::Write;

pub use ic::{
    fundamental_law_ir, information_coefficient, mean_ic, Breadth, IcMethod, MIN_IC_OBSERVATIONS,
};
pub use perf::{
    max_drawdown, quantile_longshort_returns, redundancy, sharpe, turnover, LongShort,
};
pub(crate) use perf::{leg_size, one_sided_turnover};
pub use returns::ForwardReturns;
pub use splits::{forward_splits, SplitPlan, SplitWindow};

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::stats;

pub const DEFAULT_PERIODS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSettings {
    pub ic_method: IcMethod,
    pub quantile: f64,
    pub cost_rate: f64,
    pub periods_per_year: f64,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            ic_method: IcMethod::Spearman,
            quantile: 0.1,
            cost_rate: 0.0,
            periods_per_year: DEFAULT_PERIODS_PER_YEAR,
        }
    }
}

/// Evaluation record of one factor. Undefined statistics are NaN.
#[derive(Debug, Clone)]
pub struct FactorReport {
    pub ic_series: Vec<Option<f64>>,
    pub ic_mean: f64,
    pub ic_std: f64,
    pub icir: f64,
    pub annualized_return: f64,
    pub sharpe: f64,
    pub max_drawdown: f64,
    pub avg_turnover: f64,
    pub max_abs_corr_to_base: f64,
    pub n_dates_evaluated: usize,
}

pub const REPORT_HEADER: &str = "name,ic_mean,ic_std,icir,annualized_return,sharpe,max_drawdown,avg_turnover,max_abs_corr_to_base,n_dates_evaluated";

pub fn evaluate_factor(
    factor: &FactorMatrix,
    fwd: &ForwardReturns,
    base: &[FactorMatrix],
    settings: &ReportSettings,
) -> Result<FactorReport> {
    let ic_series = information_coefficient(factor, fwd, settings.ic_method)?;
    let ics: Vec<f64> = ic_series.iter().flatten().copied().collect();
    let ic_mean = if ics.is_empty() { f64::NAN } else { stats::mean(&ics) };
    let ic_std = if ics.len() < 2 { f64::NAN } else { stats::sample_std(&ics) };
    let icir = if ic_std > 0.0 { ic_mean / ic_std } else { f64::NAN };

    let ls = quantile_longshort_returns(factor, fwd, settings.quantile, settings.cost_rate)?;
    let realized = ls.realized();
    let annualized_return = if realized.is_empty() {
        f64::NAN
    } else {
        stats::mean(&realized) * settings.periods_per_year
    };
    let sharpe_ratio = match sharpe(&realized, settings.periods_per_year) {
        Ok(s) => s,
        Err(Error::InvalidInput(_) | Error::DegenerateVariance(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    let avg_turnover = if ls.turnover.is_empty() {
        f64::NAN
    } else {
        stats::mean(&ls.turnover)
    };
    Ok(FactorReport {
        n_dates_evaluated: ics.len(),
        ic_series,
        ic_mean,
        ic_std,
        icir,
        annualized_return,
        sharpe: sharpe_ratio,
        max_drawdown: max_drawdown(&realized),
        avg_turnover,
        max_abs_corr_to_base: redundancy(factor, base)?,
    })
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".to_string()
    }
}

impl FactorReport {
    /// One CSV row matching [`REPORT_HEADER`]; undefined values print as `NA`.
    pub fn csv_row(&self, name: &str) -> String {
        let nums = [
            self.ic_mean,
            self.ic_std,
            self.icir,
            self.annualized_return,
            self.sharpe,
            self.max_drawdown,
            self.avg_turnover,
            self.max_abs_corr_to_base,
        ];
        let mut row = csv_escape(name);
        for v in nums {
            row.push(',');
            row.push_str(&fmt_num(v));
        }
        row.push(',');
        row.push_str(&self.n_dates_evaluated.to_string());
        row
    }

    /// `date,ic` rows for every date of the factor surface.
    pub fn write_ic_csv(&self, dates: &[chrono::NaiveDate], mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "date,ic")?;
        for (d, ic) in dates.iter().zip(&self.ic_series) {
            let v = ic.map_or_else(|| "NA".to_string(), |v| v.to_string());
            writeln!(out, "{},{v}", d.format("%Y-%m-%d"))?;
        }
        Ok(())
    }
}

pub(crate) fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::WeightSeries;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn dates(n: usize) -> Arc<[NaiveDate]> {
        let d0 = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n).map(|k| d0 + chrono::Days::new(k as u64)).collect()
    }

    fn names(n: usize) -> Arc<[String]> {
        (0..n).map(|i| format!("S{i:03}")).collect()
    }

    fn matrix(rows: &[Vec<f64>]) -> FactorMatrix {
        FactorMatrix::from_fn(dates(rows.len()), names(rows[0].len()), |d, i| Some(rows[d][i]))
    }

    /// Forward returns whose surface is exactly `rows` (no tail masking).
    fn fwd(rows: &[Vec<f64>]) -> ForwardReturns {
        let mut padded = rows.to_vec();
        padded.push(vec![0.0; rows[0].len()]);
        let m = matrix(&padded);
        ForwardReturns::from_surface(m, 1).unwrap().slice_dates(0..rows.len())
    }

    #[test]
    fn ic_self_and_negated() {
        let r = vec![vec![0.01, -0.02, 0.03, 0.0, 0.05], vec![0.02, 0.01, -0.01, 0.04, 0.0]];
        let f = fwd(&r);
        for m in [IcMethod::Pearson, IcMethod::Spearman] {
            let ic = information_coefficient(f.surface(), &f, m).unwrap();
            assert!(ic.iter().all(|v| (v.unwrap() - 1.0).abs() < 1e-12));
            let neg = f.surface().map(|v| -v);
            let ic = information_coefficient(&neg, &f, m).unwrap();
            assert!(ic.iter().all(|v| (v.unwrap() + 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn spearman_example() {
        let factor = matrix(&[vec![1.0, 2.0, 3.0, 4.0, 5.0]]);
        let f = fwd(&[vec![1.0, 2.0, 3.0, 5.0, 4.0]]);
        let ic = information_coefficient(&factor, &f, IcMethod::Spearman).unwrap();
        // 1 - 6 * sum d^2 / (n (n^2 - 1)) with sum d^2 = 2
        let oracle = 1.0 - 6.0 * 2.0 / (5.0 * 24.0);
        assert!((ic[0].unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ic_masks_thin_dates() {
        let factor = matrix(&[vec![1.0, 2.0]]);
        let f = fwd(&[vec![1.0, 2.0]]);
        assert_eq!(information_coefficient(&factor, &f, IcMethod::Pearson).unwrap(), vec![None]);
        let flat = matrix(&[vec![1.0, 1.0, 1.0, 1.0]]);
        let f = fwd(&[vec![1.0, 2.0, 3.0, 4.0]]);
        assert_eq!(information_coefficient(&flat, &f, IcMethod::Spearman).unwrap(), vec![None]);
    }

    #[test]
    fn ic_axis_mismatch() {
        let a = matrix(&[vec![1.0, 2.0, 3.0]]);
        let f = fwd(&[vec![1.0, 2.0, 3.0, 4.0]]);
        assert!(matches!(
            information_coefficient(&a, &f, IcMethod::Spearman),
            Err(Error::AxisMismatch(_))
        ));
    }

    #[test]
    fn fundamental_law_examples() {
        assert!((fundamental_law_ir(0.1, 252.0) - 1.5875).abs() < 1e-4);
        assert_eq!(fundamental_law_ir(0.0, 123.0), 0.0);
        assert!((fundamental_law_ir(0.05, 400.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn longshort_four_instruments() {
        let factor = matrix(&[vec![4.0, 3.0, 2.0, 1.0]]);
        let f = fwd(&[vec![0.04, 0.03, 0.02, 0.01]]);
        let ls = quantile_longshort_returns(&factor, &f, 0.25, 0.0).unwrap();
        assert!((ls.returns[0].unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(ls.weights.weights()[0], vec![1.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn longshort_perfect_foresight() {
        let r: Vec<f64> = vec![0.05, -0.01, 0.02, 0.07, -0.03, 0.0, 0.011, 0.04, -0.02, 0.013];
        let f = fwd(&[r.clone()]);
        let ls = quantile_longshort_returns(f.surface(), &f, 0.1, 0.0).unwrap();
        let max = r.iter().cloned().fold(f64::MIN, f64::max);
        let min = r.iter().cloned().fold(f64::MAX, f64::min);
        assert!((ls.returns[0].unwrap() - (max - min)).abs() < 1e-15);
    }

    #[test]
    fn longshort_skips_constant_and_holds() {
        let factor = matrix(&[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]);
        let f = fwd(&[vec![0.0; 3], vec![0.0; 3]]);
        let ls = quantile_longshort_returns(&factor, &f, 0.3, 0.0).unwrap();
        assert_eq!(ls.skipped, vec![1]);
        assert_eq!(ls.returns[1], None);
        assert_eq!(ls.weights.len(), 1);
    }

    #[test]
    fn longshort_ties_by_instrument_order() {
        let factor = matrix(&[vec![1.0, 1.0, 2.0, 2.0]]);
        let f = fwd(&[vec![0.0; 4]]);
        let ls = quantile_longshort_returns(&factor, &f, 0.25, 0.0).unwrap();
        assert_eq!(ls.weights.weights()[0], vec![-1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn longshort_rejects_bad_quantile() {
        let factor = matrix(&[vec![1.0, 2.0]]);
        let f = fwd(&[vec![0.0; 2]]);
        assert!(quantile_longshort_returns(&factor, &f, 0.0, 0.0).is_err());
        assert!(quantile_longshort_returns(&factor, &f, 0.6, 0.0).is_err());
    }

    #[test]
    fn sharpe_examples() {
        // mean 0.001, sample std 0.01
        let r = [0.001 + 0.01 / 2f64.sqrt(), 0.001 - 0.01 / 2f64.sqrt()];
        assert!((sharpe(&r, 252.0).unwrap() - 1.5875).abs() < 1e-3);
        assert!(matches!(sharpe(&[0.01; 10], 252.0), Err(Error::DegenerateVariance(_))));
        assert!(matches!(sharpe(&[0.01], 252.0), Err(Error::InvalidInput(_))));
    }

    fn two_pass_sharpe(r: &[f64], ppy: f64) -> f64 {
        let n = r.len() as f64;
        let m = r.iter().sum::<f64>() / n;
        let v = r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        m / v.sqrt() * ppy.sqrt()
    }

    fn brute_drawdown(r: &[f64]) -> f64 {
        let mut eq = vec![1.0];
        for x in r {
            eq.push(eq.last().unwrap() * (1.0 + x));
        }
        let mut worst = 0.0_f64;
        for t in 0..eq.len() {
            for u in t..eq.len() {
                worst = worst.max(1.0 - eq[u] / eq[t]);
            }
        }
        worst
    }

    #[test]
    fn drawdown_examples() {
        let r = [0.2, 0.9 / 1.2 - 1.0, 1.1 / 0.9 - 1.0];
        assert!((max_drawdown(&r) - 0.25).abs() < 1e-12);
        assert!((brute_drawdown(&r) - 0.25).abs() < 1e-12);
        assert_eq!(max_drawdown(&[0.01, 0.0, 0.02]), 0.0);
        assert_eq!(max_drawdown(&[-0.5]), 0.5);
        assert_eq!(max_drawdown(&[]), 0.0);
    }

    #[test]
    fn turnover_examples() {
        let mut w = WeightSeries::new(names(2));
        let d = dates(3);
        w.push(d[0], vec![1.0, 0.0]).unwrap();
        w.push(d[1], vec![0.0, 1.0]).unwrap();
        w.push(d[2], vec![0.0, 1.0]).unwrap();
        assert_eq!(turnover(&w), vec![0.5, 1.0, 0.0]);
    }

    #[test]
    fn redundancy_examples() {
        let b = matrix(&[vec![1.0, 4.0, 2.0], vec![3.0, 0.5, 7.0]]);
        assert_eq!(redundancy(&b, &[]).unwrap(), 0.0);
        assert!((redundancy(&b, &[b.clone()]).unwrap() - 1.0).abs() < 1e-12);
        let affine = b.map(|v| 2.0 * v + 3.0);
        assert!((redundancy(&affine, &[b.clone()]).unwrap() - 1.0).abs() < 1e-12);
        // residual of c on b through pooled OLS
        let c = matrix(&[vec![0.3, -1.0, 2.0], vec![1.5, 0.2, -0.7]]);
        let (bv, cv) = (b.values(), c.values());
        let n = bv.len() as f64;
        let (mb, mc) = (bv.iter().sum::<f64>() / n, cv.iter().sum::<f64>() / n);
        let cov: f64 = bv.iter().zip(cv).map(|(x, y)| (x - mb) * (y - mc)).sum();
        let var: f64 = bv.iter().map(|x| (x - mb) * (x - mb)).sum();
        let beta = cov / var;
        let resid: Vec<f64> = bv.iter().zip(cv).map(|(x, y)| y - mc - beta * (x - mb)).collect();
        let rm = FactorMatrix::from_fn(b.dates_arc(), b.instruments_arc(), |d, i| Some(resid[d * 3 + i]));
        assert!(redundancy(&rm, &[b]).unwrap() <= 1e-9);
    }

    #[test]
    fn split_examples() {
        let plan = forward_splits(10, 4, 2, 2, 2).unwrap();
        assert_eq!(
            plan.windows,
            vec![
                SplitWindow { train: 0..4, valid: 4..6, test: 6..8 },
                SplitWindow { train: 2..6, valid: 6..8, test: 8..10 },
            ]
        );
        let plan = forward_splits(8, 4, 2, 2, 4).unwrap();
        assert_eq!(plan.windows.len(), 1);
        assert!(matches!(forward_splits(5, 4, 2, 2, 1), Err(Error::Config(_))));
        assert!(matches!(forward_splits(10, 0, 2, 2, 1), Err(Error::Config(_))));
    }

    #[test]
    fn report_row_uses_na() {
        let factor = matrix(&[vec![1.0, 2.0, 3.0, 4.0], vec![4.0, 3.0, 1.0, 2.0]]);
        let f = fwd(&[vec![0.01, 0.02, 0.03, 0.04], vec![0.0, 0.01, -0.01, 0.02]]);
        let rep = evaluate_factor(&factor, &f, &[], &ReportSettings::default()).unwrap();
        assert_eq!(rep.n_dates_evaluated, 2);
        let row = rep.csv_row("f,1");
        assert!(row.starts_with("\"f,1\","));
        assert_eq!(row.split(',').count(), REPORT_HEADER.split(',').count() + 1);
        let flat = matrix(&[vec![1.0; 4], vec![1.0; 4]]);
        let rep = evaluate_factor(&flat, &f, &[], &ReportSettings::default()).unwrap();
        assert!(rep.csv_row("x").contains("NA"));
    }

    proptest! {
        #[test]
        fn sharpe_matches_two_pass(r in prop::collection::vec(-0.1f64..0.1, 2..200)) {
            let a = sharpe(&r, 252.0);
            if let Ok(a) = a {
                let b = two_pass_sharpe(&r, 252.0);
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
            }
        }

        #[test]
        fn drawdown_matches_brute_and_is_bounded(r in prop::collection::vec(-0.99f64..1.0, 0..60)) {
            let a = max_drawdown(&r);
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!((a - brute_drawdown(&r)).abs() < 1e-12);
        }

        #[test]
        fn turnover_matches_direct_sum(a in prop::collection::vec(-1.0f64..1.0, 5), b in prop::collection::vec(-1.0f64..1.0, 5)) {
            let mut w = WeightSeries::new(names(5));
            let d = dates(2);
            w.push(d[0], a.clone()).unwrap();
            w.push(d[1], b.clone()).unwrap();
            let t = turnover(&w);
            let mut direct = 0.0;
            for i in 0..5 { direct += (b[i] - a[i]).abs(); }
            prop_assert!((t[1] - 0.5 * direct).abs() < 1e-12);
            prop_assert!(t.iter().all(|x| *x >= 0.0));
        }

        #[test]
        fn ic_affine_invariance(
            f in prop::collection::vec(-5.0f64..5.0, 8),
            r in prop::collection::vec(-0.1f64..0.1, 8),
            a in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0],
            b in -2.0f64..2.0,
        ) {
            let fm = matrix(&[f.clone()]);
            let fw = fwd(&[r]);
            let g = fm.map(|v| a * v + b);
            for m in [IcMethod::Pearson, IcMethod::Spearman] {
                let x = information_coefficient(&fm, &fw, m).unwrap()[0];
                let y = information_coefficient(&g, &fw, m).unwrap()[0];
                if let (Some(x), Some(y)) = (x, y) {
                    prop_assert!((y - a.signum() * x).abs() < 1e-9, "{x} {y}");
                }
            }
        }

        #[test]
        fn longshort_argsort_invariant(f in prop::collection::vec(-5.0f64..5.0, 10), q in 0.05f64..0.5) {
            let fm = matrix(&[f.clone()]);
            let fw = fwd(&[vec![0.01; 10]]);
            let g = fm.map(|v| v.exp() * 3.0 + 1.0);
            let a = quantile_longshort_returns(&fm, &fw, q, 0.0);
            let b = quantile_longshort_returns(&g, &fw, q, 0.0);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a.weights, b.weights);
            }
        }

        #[test]
        fn cost_monotone(f in prop::collection::vec(-5.0f64..5.0, 10), r in prop::collection::vec(-0.1f64..0.1, 10), c1 in 0.0f64..0.01, c2 in 0.0f64..0.01) {
            let fm = matrix(&[f]);
            let fw = fwd(&[r]);
            let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let a = quantile_longshort_returns(&fm, &fw, 0.2, lo).unwrap();
            let b = quantile_longshort_returns(&fm, &fw, 0.2, hi).unwrap();
            if let (Some(x), Some(y)) = (a.returns[0], b.returns[0]) {
                prop_assert!(y <= x);
            }
        }

        #[test]
        fn splits_never_leak(n in 3usize..80, tr in 1usize..20, va in 1usize..10, te in 1usize..10, step in 1usize..10) {
            match forward_splits(n, tr, va, te, step) {
                Ok(plan) => {
                    prop_assert!(!plan.windows.is_empty());
                    for (k, w) in plan.windows.iter().enumerate() {
                        prop_assert_eq!(w.train.start, k * step);
                        prop_assert!(w.train.end <= w.valid.start && w.valid.end <= w.test.start);
                        prop_assert!(w.test.end <= n);
                    }
                }
                Err(_) => prop_assert!(tr + va + te > n),
            }
        }
    }
}
