//! Generate a synthetic market, write it as long-format CSV, read it back and
//! preprocess it.
//!
//! Run with `cargo run --example preprocess_panel -- [OUT.csv]`. When a path
//! is given the raw panel is written there, ready for `alphaforge ingest`.

use alphaforge::panel::{preprocess, read_panel, write_panel, Impute, PreprocessSpec, Standardize};
use alphaforge::synthetic::{generate_market, MarketSpec};

fn main() -> alphaforge::Result<()> {
    let panel = generate_market(&MarketSpec {
        n_dates: 120,
        n_instruments: 30,
        missing_fraction: 0.02,
        seed: 3,
        ..MarketSpec::default()
    })?;
    let mut csv = Vec::new();
    write_panel(&panel, &mut csv, false).expect("in-memory write");
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, &csv).map_err(|e| alphaforge::Error::io(&path, e))?;
        println!("wrote {path}");
    }
    let back = read_panel(&csv[..])?;
    assert_eq!(back, panel);

    let (nd, ni, nf) = panel.shape();
    println!("{nd} dates x {ni} instruments x {nf} fields, {:.2}% missing", 100.0 * panel.missing_fraction());

    let spec = PreprocessSpec {
        impute: Impute::ForwardFill { max_gap: 3 },
        winsorize_p: 0.01,
        standardize: Standardize::ZscoreCrossSection,
        fields: Some(vec!["volume".into()]),
    };
    let clean = preprocess(&panel, &spec)?;
    println!("after forward fill: {:.2}% missing", 100.0 * clean.missing_fraction());
    let v = clean.field_index("volume")?;
    let row: Vec<String> = (0..5)
        .map(|i| clean.get(nd - 1, i, v).map_or("NA".into(), |x| format!("{x:+.3}")))
        .collect();
    println!("standardized volume on {}: {}", clean.dates()[nd - 1], row.join(" "));
    Ok(())
}
