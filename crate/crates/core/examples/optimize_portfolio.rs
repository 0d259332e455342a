//! Solve one constrained mean-variance program, then backtest the optimizer
//! rule on a synthetic market.
//!
//! Run with `cargo run --release --example optimize_portfolio`.

use alphaforge::parse;
use alphaforge::portfolio::{
    run_backtest, solve_weights, BacktestConfig, Budget, CovEstimate, OptimizerRule, QpSpec,
    Schedule, ScoreSource, SolverOptions, TurnoverMode, WeightRule,
};
use alphaforge::synthetic::{generate_market, MarketSpec};
use nalgebra::DMatrix;

fn main() -> alphaforge::Result<()> {
    let sigma = DMatrix::from_row_slice(3, 3, &[0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16]);
    let spec = QpSpec {
        expected_returns: vec![0.05, 0.08, 0.12],
        sigma: CovEstimate::from_matrix(sigma)?,
        risk_cap: 0.03,
        turnover_cap: 0.5,
        weight_cap: 0.6,
        prev_weights: vec![0.3, 0.3, 0.0],
        budget: Budget::SumToOne,
        turnover_mode: TurnoverMode::AggregateL1,
    };
    let w = solve_weights(&spec, &SolverOptions::default())?;
    spec.certify(&w)?;
    println!(
        "weights {:.4?}  expected return {:.5}  variance {:.5}",
        w,
        spec.objective(&w),
        spec.risk(&w)
    );

    let panel = generate_market(&MarketSpec::default())?;
    let config = BacktestConfig {
        schedule: Schedule::Every(5),
        rule: WeightRule::Optimizer(OptimizerRule::default()),
        cost_rate: 0.0005,
        ..BacktestConfig::default()
    };
    let source = ScoreSource::Expr(parse("-rank(ts_delta(close, 5))")?);
    let result = run_backtest(&panel, &source, &config)?;
    println!(
        "{} rebalances, {} skipped, final equity {:.4}, sharpe {:.3}, max drawdown {:.3}",
        result.weights.len(),
        result.skipped.len(),
        result.equity.last().copied().unwrap_or(1.0),
        result.report.sharpe,
        result.report.max_drawdown
    );
    Ok(())
}
