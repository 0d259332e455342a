//! Covariance estimation, constrained weight optimization, the backtest loop
//! and order slicing.

mod backtest;
mod covariance;
mod execution;
mod qp;

pub use backtest::{
    period_returns, run_backtest, BacktestConfig, BacktestResult, OptimizerRule, Schedule,
    ScoreSource, WeightRule,
};
pub use covariance::{estimate_covariance, CovEstimate};
pub use execution::{split_order, SliceSchedule};
pub use qp::{solve_weights, Budget, QpSpec, SolverOptions, TurnoverMode, CERTIFY_TOLERANCE};
