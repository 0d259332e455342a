//! Compare the realized information ratio of a quantile long-short book with
//! the fundamental law `IR = IC · sqrt(breadth)` under both breadth readings.
//!
//! Run with `cargo run --release --example fundamental_law`.

use alphaforge::metrics::{
    fundamental_law_ir, information_coefficient, mean_ic, quantile_longshort_returns, sharpe,
    Breadth, IcMethod,
};
use alphaforge::synthetic::{ic_experiment, IcExperimentSpec};

fn main() -> alphaforge::Result<()> {
    println!("target_ic  ic       realized_ir  law(per date)  law(per decision)");
    for target_ic in [0.02, 0.05, 0.1] {
        let spec = IcExperimentSpec {
            target_ic,
            ..IcExperimentSpec::default()
        };
        let (factor, fwd) = ic_experiment(&spec)?;
        let ic = mean_ic(&information_coefficient(&factor, &fwd, IcMethod::Spearman)?);
        let book = quantile_longshort_returns(&factor, &fwd, 0.1, 0.0)?;
        let ir = sharpe(&book.realized(), 252.0)?;
        let per_date = fundamental_law_ir(ic, Breadth::Rebalances.count(252.0, spec.n_instruments));
        let per_decision = fundamental_law_ir(ic, Breadth::Decisions.count(252.0, spec.n_instruments));
        println!("{target_ic:<9}  {ic:.4}   {ir:>11.2}  {per_date:>13.2}  {per_decision:>17.2}");
    }
    Ok(())
}
