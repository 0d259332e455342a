//! Parse factor expressions, print their canonical form and show how syntax
//! errors are reported.
//!
//! Run with `cargo run --example parse_factor -- ["EXPR" ...]`.

use alphaforge::dsl::{OperatorRegistry, EXAMPLE_FACTOR};
use alphaforge::{parse, print};

fn main() {
    let mut inputs: Vec<String> = std::env::args().skip(1).collect();
    if inputs.is_empty() {
        inputs = vec![
            EXAMPLE_FACTOR.to_string(),
            "close / ts_mean(close, 20) - 1".to_string(),
            "group_rank(ts_delta(volume, 5), sector)".to_string(),
            "rank(close, 3)".to_string(),
            "ts_mean(close, )".to_string(),
        ];
    }
    for text in &inputs {
        match parse(text) {
            Ok(e) => println!(
                "ok    {text}\n      canonical {}  depth {}  nodes {}  fields {:?}",
                print(&e),
                e.depth(),
                e.node_count(),
                e.required_fields()
            ),
            Err(err) => println!("error {text}\n      {err}"),
        }
    }
    let names: Vec<&str> = OperatorRegistry::global().iter().map(|s| s.name).collect();
    println!("{} operators: {}", names.len(), names.join(" "));
}
