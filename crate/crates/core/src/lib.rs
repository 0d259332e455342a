//! Symbolic alpha factor research: mine factor expressions, evaluate them
//! against forward returns, combine them, and turn scores into portfolios.

pub mod cli;
pub mod combiner;
pub mod dsl;
pub mod error;
pub mod factorbase;
mod fsutil;
pub mod metrics;
pub mod miner;
pub mod panel;
pub mod portfolio;
pub mod rng;
mod stats;
pub mod synthetic;
pub mod weights;

pub use dsl::{evaluate, parse, print, Expr, FactorMatrix, Op};
pub use error::{Error, Result};
pub use panel::PanelFrame;
pub use weights::WeightSeries;
