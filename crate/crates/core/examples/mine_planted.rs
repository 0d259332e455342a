//! Plant a known factor in a synthetic market and let the miner look for it.
//!
//! Run with `cargo run --release --example mine_planted`.

use alphaforge::metrics::{information_coefficient, mean_ic, IcMethod};
use alphaforge::miner::{mine, GenerationStats, MinerConfig};
use alphaforge::synthetic::{planted_market, PlantedSpec};
use alphaforge::{evaluate, Op};

fn main() -> alphaforge::Result<()> {
    let market = planted_market(&PlantedSpec::default())?;
    let planted_ic = mean_ic(&information_coefficient(
        &evaluate(&market.planted, &market.panel)?,
        &market.fwd,
        IcMethod::Spearman,
    )?);
    println!("planted {}  ic {planted_ic:.4}", market.planted);

    let cfg = MinerConfig {
        seed: 7,
        operators: vec![Op::Neg, Op::Rank, Op::TsCorr],
        ..MinerConfig::default()
    };
    eprintln!("{}", GenerationStats::CSV_HEADER);
    let started = std::time::Instant::now();
    let result = mine(&market.panel, &market.fwd, &[], &cfg, |g| eprintln!("{}", g.csv_row()))?;
    println!("{} expressions evaluated in {:.1?}", result.evaluations, started.elapsed());

    for c in result.candidates.iter().take(5) {
        let ic = mean_ic(&information_coefficient(
            &evaluate(&c.expr, &market.panel)?,
            &market.fwd,
            IcMethod::Spearman,
        )?);
        println!("{:>8.4}  full-range ic {ic:.4}  {}", c.fitness, c.expr);
    }
    Ok(())
}
