//! Genetic search over the expression space.
//!
//! Every tree the miner builds is valid and within the caps when it is
//! created, so no evaluation ever sees a malformed expression.

mod config;
mod search;
mod variation;

pub use config::{Fitness, MinerConfig};
pub use search::{mine, validation_start, Candidate, GenerationStats, MineResult};
pub use variation::{crossover, mutate, random_expr, Varied};
