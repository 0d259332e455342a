//! Factor expression language: operator registry, parser, canonical printer
//! and evaluator.

mod ast;
mod eval;
mod matrix;
mod parser;
mod registry;

pub use ast::{Arg, Expr};
pub(crate) use ast::is_identifier;
pub use eval::{evaluate, evaluate_with, EvalOptions, DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES};
pub use matrix::FactorMatrix;
pub use parser::parse;
pub use registry::{Category, Op, OpSpec, OperatorRegistry, ParamKind};


/// The textbook example factor: negative rolling correlation of ranked close and volume.
pub const EXAMPLE_FACTOR: &str = "-ts_corr(rank(close), rank(volume), 50)";

/// Canonical text of an expression; this is the interchange format.
pub fn print(expr: &Expr) -> String {
    expr.to_string()
}

/// True when the tree is well formed and inside the depth and node caps.
pub fn within_caps(expr: &Expr, max_depth: usize, max_nodes: usize) -> bool {
    expr.is_well_formed() && expr.depth() <= max_depth && expr.node_count() <= max_nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::SyntaxErrorKind;
    use crate::panel::PanelFrame;
    use chrono::NaiveDate;

    fn panel(fields: &[&str], values: &[&[&[f64]]]) -> PanelFrame {
        // values[field][date][instrument]
        let nd = values[0].len();
        let ni = values[0][0].len();
        let dates = (0..nd)
            .map(|d| NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(d as u64))
            .collect();
        let instruments = (0..ni).map(|i| format!("S{i}")).collect();
        PanelFrame::from_fn(
            dates,
            instruments,
            fields.iter().map(|s| s.to_string()).collect(),
            |d, i, f| {
                let v = values[f][d][i];
                (!v.is_nan()).then_some(v)
            },
        )
        .unwrap()
    }

    #[test]
    fn parses_example_factor() {
        let e = parse(EXAMPLE_FACTOR).unwrap();
        let expected = Expr::unary(
            Op::Neg,
            Expr::ts_corr(
                Expr::unary(Op::Rank, Expr::field("close")),
                Expr::unary(Op::Rank, Expr::field("volume")),
                50,
            ),
        );
        assert_eq!(e, expected);
        assert_eq!(print(&e), EXAMPLE_FACTOR);
        let fields: Vec<String> = e.required_fields().into_iter().collect();
        assert_eq!(fields, ["close", "volume"]);
    }

    #[test]
    fn unbalanced_paren_offset() {
        let e = parse("rank(close").unwrap_err();
        assert_eq!(e.kind, SyntaxErrorKind::UnbalancedParen);
        assert_eq!(e.offset, 10);
        let e = parse("rank(close))").unwrap_err();
        assert_eq!(e.kind, SyntaxErrorKind::UnbalancedParen);
        assert_eq!(e.offset, 11);
    }

    #[test]
    fn arity_mismatch() {
        let e = parse("ts_corr(rank(close), 50)").unwrap_err();
        assert!(matches!(e.kind, SyntaxErrorKind::ArityMismatch { expected: 3, found: 2, .. }));
        assert_eq!(e.offset, 0);
    }

    #[test]
    fn other_syntax_errors() {
        assert!(matches!(parse("foo(close)").unwrap_err().kind, SyntaxErrorKind::UnknownOperator(_)));
        let e = parse("ts_mean(close, 1)").unwrap_err();
        assert_eq!(e.kind, SyntaxErrorKind::WindowTooSmall(1));
        assert_eq!(e.offset, 15);
        assert!(matches!(parse("Close").unwrap_err().kind, SyntaxErrorKind::Lexical(_)));
        assert!(matches!(parse("close $").unwrap_err().kind, SyntaxErrorKind::Lexical(_)));
        assert!(matches!(parse("ts_mean(close, 2.5)").unwrap_err().kind, SyntaxErrorKind::BadParameter(_)));
        assert!(matches!(parse("group_rank(close, 3)").unwrap_err().kind, SyntaxErrorKind::BadParameter(_)));
        assert!(matches!(parse("").unwrap_err().kind, SyntaxErrorKind::UnexpectedEnd));
        assert!(matches!(parse("close close").unwrap_err().kind, SyntaxErrorKind::UnexpectedToken(_)));
    }

    #[test]
    fn infix_sugar_normalizes() {
        let e = parse("close - open * 2 / volume").unwrap();
        assert_eq!(print(&e), "sub(close, safe_div(mul(open, 2), volume))");
        let e = parse("(close + open) * -1.5").unwrap();
        assert_eq!(print(&e), "mul(add(close, open), -1.5)");
    }

    #[test]
    fn printer_edge_cases() {
        assert_eq!(print(&Expr::Const(1.5)), "1.5");
        let neg_const = Expr::unary(Op::Neg, Expr::Const(1.5));
        assert_eq!(print(&neg_const), "-(1.5)");
        assert_eq!(parse("-(1.5)").unwrap(), neg_const);
        assert_eq!(parse("-1.5").unwrap(), Expr::Const(-1.5));
        let nn = Expr::unary(Op::Neg, Expr::Const(-2.0));
        assert_eq!(parse(&print(&nn)).unwrap(), nn);
        let e = parse("winsorize(group_demean(close, sector), 0.05)").unwrap();
        assert_eq!(print(&e), "winsorize(group_demean(close, sector), 0.05)");
    }

    #[test]
    fn required_fields_cases() {
        assert!(Expr::Const(1.0).required_fields().is_empty());
        let e = parse("group_rank(close, sector)").unwrap();
        let f: Vec<String> = e.required_fields().into_iter().collect();
        assert_eq!(f, ["close", "sector"]);
    }

    #[test]
    fn evaluate_field_is_copy() {
        let p = panel(&["close"], &[&[&[1.0, 2.0], &[3.0, f64::NAN]]]);
        let m = evaluate(&Expr::field("close"), &p).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert_eq!(m.get(1, 0), Some(3.0));
        assert_eq!(m.get(1, 1), None);
        assert!(matches!(evaluate(&Expr::field("open"), &p), Err(crate::Error::FieldNotFound(_))));
    }

    #[test]
    fn rank_convention() {
        let p = panel(&["x"], &[&[&[3.0, 1.0, 2.0]]]);
        let m = evaluate(&parse("rank(x)").unwrap(), &p).unwrap();
        assert_eq!(m.row(0).0, &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn ts_corr_linear_series() {
        let x: Vec<Vec<f64>> = (1..=5).map(|t| vec![t as f64, 10.0 - t as f64]).collect();
        let y: Vec<Vec<f64>> = (1..=5).map(|t| vec![2.0 * t as f64, 3.0 * t as f64]).collect();
        let xs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let ys: Vec<&[f64]> = y.iter().map(|r| r.as_slice()).collect();
        let p = panel(&["x", "y"], &[&xs, &ys]);
        let m = evaluate(&parse("ts_corr(x, y, 3)").unwrap(), &p).unwrap();
        for d in 0..5 {
            if d < 2 {
                assert_eq!(m.get(d, 0), None);
            } else {
                assert_eq!(m.get(d, 0), Some(1.0));
                assert_eq!(m.get(d, 1), Some(-1.0));
            }
        }
    }

    #[test]
    fn window_requires_full_observation() {
        let col: [&[f64]; 5] = [&[1.0], &[2.0], &[f64::NAN], &[4.0], &[5.0]];
        let p = panel(&["x"], &[&col]);
        let m = evaluate(&parse("ts_mean(x, 2)").unwrap(), &p).unwrap();
        let got: Vec<Option<f64>> = (0..5).map(|d| m.get(d, 0)).collect();
        assert_eq!(got, vec![None, Some(1.5), None, None, Some(4.5)]);
    }

    #[test]
    fn timeseries_operator_values() {
        let col: [&[f64]; 4] = [&[1.0], &[4.0], &[2.0], &[3.0]];
        let p = panel(&["x"], &[&col]);
        let at = |text: &str| evaluate(&parse(text).unwrap(), &p).unwrap().get(3, 0).unwrap();
        assert_eq!(at("ts_delta(x, 3)"), 3.0 - 4.0);
        assert_eq!(at("ts_max(x, 3)"), 4.0);
        assert_eq!(at("ts_min(x, 3)"), 2.0);
        assert_eq!(at("ts_rank(x, 3)"), 0.0);
        assert_eq!(at("ts_rank(x, 4)"), 2.0 * 2.0 / 3.0 - 1.0);
        assert!((at("decay_linear(x, 3)") - (3.0 * 3.0 + 2.0 * 2.0 + 4.0) / 6.0).abs() < 1e-15);
        assert!((at("ts_std(x, 2)") - (0.5_f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn safe_operators_are_total() {
        let p = panel(&["x", "y"], &[&[&[-4.0, 0.0, 9.0]], &[&[0.0, 2.0, 1e-13]]]);
        let m = evaluate(&parse("safe_sqrt(x)").unwrap(), &p).unwrap();
        assert_eq!(m.row(0).0, &[-2.0, 0.0, 3.0]);
        let m = evaluate(&parse("safe_log(x)").unwrap(), &p).unwrap();
        assert_eq!(m.get(0, 0), Some(-(5.0_f64.ln())));
        let m = evaluate(&parse("safe_div(x, y)").unwrap(), &p).unwrap();
        assert_eq!(m.get(0, 0), None);
        assert_eq!(m.get(0, 1), Some(0.0));
        assert_eq!(m.get(0, 2), None);
        let m = evaluate(&parse("sign(x)").unwrap(), &p).unwrap();
        assert_eq!(m.row(0).0, &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn group_operators() {
        let p = panel(
            &["x", "sector"],
            &[&[&[1.0, 5.0, 2.0, 7.0, 3.0]], &[&[1.0, 2.0, 1.0, 2.0, f64::NAN]]],
        );
        let m = evaluate(&parse("group_demean(x, sector)").unwrap(), &p).unwrap();
        assert_eq!(m.get(0, 0), Some(-0.5));
        assert_eq!(m.get(0, 1), Some(-1.0));
        assert_eq!(m.get(0, 4), None);
        let m = evaluate(&parse("group_rank(x, sector)").unwrap(), &p).unwrap();
        assert_eq!(m.get(0, 2), Some(1.0));
        assert_eq!(m.get(0, 1), Some(-1.0));
        let m = evaluate(&parse("neutralize(x, sector)").unwrap(), &p).unwrap();
        assert_eq!(m.get(0, 3), Some(1.0));
    }

    #[test]
    fn depth_cap_enforced() {
        let e = parse("rank(rank(rank(rank(rank(rank(rank(rank(close))))))))").unwrap();
        assert_eq!(e.depth(), 9);
        let p = panel(&["close"], &[&[&[1.0]]]);
        assert!(matches!(evaluate(&e, &p), Err(crate::Error::DepthExceeded { depth: 9, cap: 8 })));
        assert!(evaluate_with(&e, &p, EvalOptions { max_depth: 9 }).is_ok());
    }
}
