//! Rolling ridge combination of two factors whose loadings drift over time,
//! followed by permutation importance of the last model.
//!
//! Run with `cargo run --release --example combine_factors`.

use alphaforge::combiner::{permutation_importance, rolling_fit_predict, DEFAULT_LAMBDA_GRID};
use alphaforge::metrics::{forward_splits, information_coefficient, mean_ic, IcMethod};
use alphaforge::synthetic::{drifting_factors, DriftSpec};

fn main() -> alphaforge::Result<()> {
    let spec = DriftSpec::default();
    let (factors, fwd) = drifting_factors(&spec)?;
    let plan = forward_splits(spec.n_dates, 60, 20, 20, 20)?;
    let rolled = rolling_fit_predict(&factors, &fwd, &plan, &DEFAULT_LAMBDA_GRID)?;

    println!("window  lambda  coefficients");
    for (k, m) in rolled.fitted_windows.iter().zip(&rolled.models) {
        println!("{k:>6}  {:>6}  {:+.2e} {:+.2e}", m.lambda, m.coefficients[0], m.coefficients[1]);
    }
    let combined = mean_ic(&information_coefficient(&rolled.scores, &fwd, IcMethod::Spearman)?);
    for (j, f) in factors.iter().enumerate() {
        let mut alone = f.clone();
        let first_test = plan.windows[0].test.start;
        alone.mask_dates(0..first_test);
        let ic = mean_ic(&information_coefficient(&alone, &fwd, IcMethod::Spearman)?);
        println!("factor {j} alone: test-period ic {ic:+.4}");
    }
    println!("combined: test-period ic {combined:+.4}");

    if let (Some(model), Some(&k)) = (rolled.models.last(), rolled.fitted_windows.last()) {
        let test = plan.windows[k].test.clone();
        let slice: Vec<_> = factors.iter().map(|f| f.slice_dates(test.clone())).collect();
        let report = permutation_importance(model, &slice, &fwd.slice_dates(test), 20, 1)?;
        let mut out = Vec::new();
        report.write_csv(&mut out).expect("in-memory write");
        print!("{}", String::from_utf8_lossy(&out));
    }
    Ok(())
}
