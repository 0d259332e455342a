//! Commit factors that build on each other, schedule them, evaluate in
//! dependency order and round-trip the store through disk.
//!
//! Run with `cargo run --example factor_base -- [PATH.jsonl]`.

use std::collections::BTreeSet;

use alphaforge::factorbase::{FactorBase, NewFactor};
use alphaforge::synthetic::{generate_market, MarketSpec};
use alphaforge::{parse, Error};

fn main() -> alphaforge::Result<()> {
    let panel = generate_market(&MarketSpec::default())?;
    let fields: BTreeSet<String> = panel.fields().iter().cloned().collect();
    let mut base = FactorBase::new();
    let defs = [
        ("momentum", "ts_delta(close, 20) / close"),
        ("liquidity", "rank(ts_mean(volume, 10))"),
        ("smooth_momentum", "ts_mean(momentum, 5)"),
        ("blend", "rank(smooth_momentum) + liquidity"),
    ];
    for (name, text) in defs {
        let id = base.commit(
            NewFactor {
                name: name.into(),
                expr: parse(text)?,
                created_at: "2024-01-02T00:00:00Z".into(),
                metrics: None,
            },
            &fields,
        )?;
        println!("committed {name:<16} {id}");
    }
    let again = base.commit(
        NewFactor {
            name: "copy".into(),
            expr: parse("rank(ts_mean(volume, 10))")?,
            created_at: "2024-01-02T00:00:00Z".into(),
            metrics: None,
        },
        &fields,
    );
    assert!(matches!(again, Err(Error::DuplicateFactor(_))));

    let blend = base.by_name("blend").expect("committed").id.clone();
    let targets = BTreeSet::from([blend]);
    println!("schedule for blend:");
    for (id, m) in base.evaluate_scheduled(&targets, &panel)? {
        let name = &base.get(&id).expect("scheduled").name;
        println!("  {name:<16} {} cells", m.observed_count());
    }

    let path = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("alphaforge_example_base.jsonl"));
    base.save(&path)?;
    assert_eq!(FactorBase::load(&path)?, base);
    println!("saved and reloaded {} records at {}", base.len(), path.display());
    Ok(())
}
