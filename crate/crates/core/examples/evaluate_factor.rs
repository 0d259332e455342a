//! Evaluate a factor expression on a synthetic market and print its report.
//!
//! Run with `cargo run --example evaluate_factor -- ["EXPR"]`.

use alphaforge::metrics::{evaluate_factor, ForwardReturns, ReportSettings, REPORT_HEADER};
use alphaforge::synthetic::{generate_market, MarketSpec};
use alphaforge::{evaluate, parse};

fn main() -> alphaforge::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "-rank(ts_delta(close, 5))".to_string());
    let expr = parse(&text)?;
    let panel = generate_market(&MarketSpec::default())?;
    let fwd = ForwardReturns::from_prices(&panel, "close", 1)?;
    let factor = evaluate(&expr, &panel)?;
    let base = [evaluate(&parse("rank(close)")?, &panel)?];
    let report = evaluate_factor(&factor, &fwd, &base, &ReportSettings::default())?;

    println!("{REPORT_HEADER}");
    println!("{}", report.csv_row(&expr.canonical()));
    let defined = report.ic_series.iter().flatten().count();
    println!(
        "{defined} of {} dates have an IC; {} cells observed",
        report.ic_series.len(),
        factor.observed_count()
    );
    Ok(())
}
