//! Acceptance suite. Each test prints one `criterion N ...: PASS|FAIL` line
//! and asserts the same verdict.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use alphaforge::combiner::{fit, permutation_importance, rolling_fit_predict, DEFAULT_LAMBDA_GRID};
use alphaforge::dsl::EXAMPLE_FACTOR;
use alphaforge::factorbase::{factor_id, Dependency, FactorBase, NewFactor};
use alphaforge::metrics::{
    forward_splits, fundamental_law_ir, information_coefficient, max_drawdown, mean_ic,
    quantile_longshort_returns, sharpe, turnover, Breadth, ForwardReturns, IcMethod, SplitPlan,
};
use alphaforge::miner::{mine, random_expr, MinerConfig};
use alphaforge::panel::{preprocess, write_panel, Impute, PreprocessSpec, Standardize};
use alphaforge::portfolio::{
    run_backtest, solve_weights, split_order, BacktestConfig, BacktestResult, Budget, CovEstimate,
    OptimizerRule, QpSpec, Schedule, ScoreSource, SliceSchedule, SolverOptions, TurnoverMode,
    WeightRule,
};
use alphaforge::synthetic::{
    generate_market, ic_experiment, planted_market, IcExperimentSpec, MarketSpec, PlantedSpec,
};
use alphaforge::{evaluate, parse, print, rng, Error, Expr, FactorMatrix, Op, PanelFrame, WeightSeries};
use nalgebra::DMatrix;
use rand::Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn within(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

fn small_market(seed: u64) -> PanelFrame {
    generate_market(&MarketSpec {
        n_dates: 50,
        n_instruments: 20,
        n_sectors: 4,
        missing_fraction: 0.05,
        seed,
    })
    .unwrap()
}

fn rich_config(seed: u64) -> MinerConfig {
    MinerConfig {
        seed,
        fields: ["close", "open", "high", "low", "volume"].map(String::from).to_vec(),
        group_fields: vec!["sector".into()],
        constants: vec![-1.5, -0.001, 0.25, 3.0, 1e-7, 12345.678],
        p_constant: 0.3,
        windows: vec![2, 3, 5, 10, 50],
        max_depth: 4 + (seed % 5) as usize,
        max_nodes: 12 + 8 * (seed % 4) as usize,
        ..MinerConfig::default()
    }
}

// ---------------------------------------------------------------- criterion 1

const ROUNDTRIP_COUNT: usize = 10_000;
const ROUNDTRIP_BUDGET_SECS: u64 = 10;

#[test]
fn criterion_1_parser_printer_roundtrip() {
    let started = Instant::now();
    let mut failures = Vec::new();
    for k in 0..ROUNDTRIP_COUNT {
        let cfg = rich_config(k as u64 % 20);
        let mut r = rng::stream(1, "acceptance/roundtrip", &[k as u64]);
        let e = random_expr(&cfg, &mut r).unwrap();
        let text = print(&e);
        match parse(&text) {
            Ok(back) if back == e => {}
            other => failures.push(format!("{text} -> {other:?}")),
        }
    }
    let example_ok = parse(EXAMPLE_FACTOR).map(|e| print(&e)).ok().as_deref() == Some(EXAMPLE_FACTOR);
    let elapsed = started.elapsed();
    verdict(
        1,
        "parser/printer roundtrip",
        failures.is_empty() && example_ok && within(elapsed, ROUNDTRIP_BUDGET_SECS),
        &format!(
            "{ROUNDTRIP_COUNT} expressions, {} mismatches, example verbatim {example_ok}, {elapsed:.2?} of {ROUNDTRIP_BUDGET_SECS}s; first: {:?}",
            failures.len(),
            failures.first()
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

const LOOKAHEAD_EXPRESSIONS: usize = 200;
const LOOKAHEAD_TRUNCATIONS: usize = 20;
const LOOKAHEAD_BUDGET_SECS: u64 = 60;

fn truncation_points(seed: u64, lo: usize, hi: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, "acceptance/truncation", &[]);
    (0..LOOKAHEAD_TRUNCATIONS).map(|_| r.random_range(lo..=hi)).collect()
}

fn same_backtest_prefix(full: &BacktestResult, cut: &BacktestResult, t: usize) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let last = full.dates[t - 1];
    let before = |w: &WeightSeries| -> Vec<(chrono::NaiveDate, Vec<u64>)> {
        w.dates()
            .iter()
            .zip(w.weights())
            .filter(|(d, _)| **d < last)
            .map(|(d, v)| (*d, bits(v)))
            .collect()
    };
    bits(&full.equity[..t]) == bits(&cut.equity)
        && bits(&full.period_returns[..t - 1]) == bits(&cut.period_returns)
        && before(&full.weights) == before(&cut.weights)
        && cut.weights.dates().iter().all(|d| *d < last)
        && full.skipped.iter().filter(|d| **d < last).eq(cut.skipped.iter())
}

fn rolling_plan(full: &SplitPlan, t: usize) -> SplitPlan {
    SplitPlan {
        windows: full.windows.iter().filter(|w| w.test.end <= t).cloned().collect(),
        step: full.step,
    }
}

#[test]
fn criterion_2_no_lookahead() {
    let started = Instant::now();
    let panel = small_market(5);
    let nd = panel.n_dates();
    let mut checks = 0usize;
    let mut mismatches = Vec::new();

    // expressions
    for k in 0..LOOKAHEAD_EXPRESSIONS {
        let cfg = rich_config(k as u64);
        let mut r = rng::stream(2, "acceptance/lookahead-expr", &[k as u64]);
        let e = random_expr(&cfg, &mut r).unwrap();
        let full = evaluate(&e, &panel);
        for t in truncation_points(k as u64, 1, nd) {
            let cut = evaluate(&e, &panel.truncate(t));
            let same = match (&full, &cut) {
                (Ok(f), Ok(c)) => f.slice_dates(0..t) == *c,
                (Err(_), Err(_)) => true,
                _ => false,
            };
            checks += 1;
            if !same {
                mismatches.push(format!("{e} at {t}"));
            }
        }
    }

    // preprocessing
    let spec = PreprocessSpec {
        impute: Impute::ForwardFill { max_gap: 3 },
        winsorize_p: 0.05,
        standardize: Standardize::ZscoreCrossSection,
        fields: None,
    };
    let full = preprocess(&panel, &spec).unwrap();
    for t in truncation_points(1000, 1, nd) {
        checks += 1;
        if preprocess(&panel.truncate(t), &spec).unwrap() != full.truncate(t) {
            mismatches.push(format!("preprocess at {t}"));
        }
    }

    // rolling combiner
    let exprs: Vec<Expr> = ["rank(close)", "ts_mean(rank(volume), 5)", "rank(ts_delta(close, 3))"]
        .iter()
        .map(|s| parse(s).unwrap())
        .collect();
    let surfaces = |p: &PanelFrame| -> Vec<FactorMatrix> { exprs.iter().map(|e| evaluate(e, p).unwrap()).collect() };
    let full_plan = forward_splits(nd, 20, 8, 6, 6).unwrap();
    let full_factors = surfaces(&panel);
    let full_fwd = ForwardReturns::from_prices(&panel, "close", 1).unwrap();
    for t in truncation_points(1001, 34, nd) {
        let plan = rolling_plan(&full_plan, t);
        let whole = rolling_fit_predict(&full_factors, &full_fwd, &plan, &DEFAULT_LAMBDA_GRID).unwrap();
        let cut_panel = panel.truncate(t);
        let cut_fwd = ForwardReturns::from_prices(&cut_panel, "close", 1).unwrap();
        let cut = rolling_fit_predict(&surfaces(&cut_panel), &cut_fwd, &plan, &DEFAULT_LAMBDA_GRID).unwrap();
        checks += 1;
        if whole.scores.slice_dates(0..t) != cut.scores || whole.models != cut.models {
            mismatches.push(format!("rolling_fit_predict at {t}"));
        }
    }

    // backtests
    let signal = ScoreSource::Expr(parse("rank(ts_delta(close, 3))").unwrap());
    let rules = [
        WeightRule::Quantile(0.2),
        WeightRule::Optimizer(OptimizerRule {
            lookback: 10,
            weight_cap: 0.3,
            turnover_cap: 0.5,
            risk_cap: 0.01,
            ..OptimizerRule::default()
        }),
    ];
    for (k, rule) in rules.into_iter().enumerate() {
        let cfg = BacktestConfig {
            schedule: Schedule::Every(2),
            rule,
            cost_rate: 0.001,
            ..BacktestConfig::default()
        };
        let full = run_backtest(&panel, &signal, &cfg).unwrap();
        for t in truncation_points(1002 + k as u64, 2, nd) {
            let cut = run_backtest(&panel.truncate(t), &signal, &cfg).unwrap();
            checks += 1;
            if !same_backtest_prefix(&full, &cut, t) {
                mismatches.push(format!("run_backtest rule {k} at {t}"));
            }
        }
    }

    let elapsed = started.elapsed();
    verdict(
        2,
        "no-lookahead",
        mismatches.is_empty() && within(elapsed, LOOKAHEAD_BUDGET_SECS),
        &format!(
            "{checks} truncation checks, {} mismatches, {elapsed:.2?} of {LOOKAHEAD_BUDGET_SECS}s; first: {:?}",
            mismatches.len(),
            mismatches.first()
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

const QP_SPECS: usize = 200;
const QP_OBJECTIVE_SLACK: f64 = 1e-3;
const QP_CONSTRAINT_TOL: f64 = 1e-6;
const QP_SPHERE_TOL: f64 = 1e-4;
const QP_BUDGET_SECS: u64 = 120;

/// Constraint check written against the program's definition, independent of `certify`.
fn feasible(s: &QpSpec, w: &[f64], tol: f64) -> bool {
    let risk_ok = s.risk(w) <= s.risk_cap + tol;
    let box_ok = w.iter().all(|&v| v >= -tol && v <= s.weight_cap + tol);
    let moves = w.iter().zip(&s.prev_weights).map(|(a, b)| (a - b).abs());
    let turnover_ok = match s.turnover_mode {
        TurnoverMode::Elementwise => moves.clone().all(|m| m <= s.turnover_cap + tol),
        TurnoverMode::AggregateL1 => moves.sum::<f64>() <= s.turnover_cap + tol,
    };
    let budget_ok = match s.budget {
        Budget::None => true,
        Budget::SumToOne => (w.iter().sum::<f64>() - 1.0).abs() <= tol,
    };
    risk_ok && box_ok && turnover_ok && budget_ok
}

/// Best objective over a uniform grid of the per-coordinate feasible box.
/// With a budget the last coordinate is implied by the others.
fn grid_oracle(s: &QpSpec) -> f64 {
    let n = s.expected_returns.len();
    let lo: Vec<f64> = s.prev_weights.iter().map(|p| (p - s.turnover_cap).max(0.0)).collect();
    let hi: Vec<f64> = s.prev_weights.iter().map(|p| (p + s.turnover_cap).min(s.weight_cap)).collect();
    if lo.iter().zip(&hi).any(|(a, b)| a > b) {
        return f64::NEG_INFINITY;
    }
    let free = if s.budget == Budget::SumToOne { n - 1 } else { n };
    let steps = match free {
        0 => 0,
        1 => 100_000,
        2 => 1_000,
        _ => 100,
    };
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; free];
    let mut w = vec![0.0; n];
    loop {
        for i in 0..free {
            w[i] = lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / steps as f64;
        }
        if free < n {
            w[n - 1] = 1.0 - w[..n - 1].iter().sum::<f64>();
        }
        let in_box = w[free..].iter().zip(&lo[free..]).zip(&hi[free..]).all(|((v, a), b)| v >= a && v <= b);
        if in_box && feasible(s, &w, 0.0) {
            best = best.max(s.objective(&w));
        }
        let mut k = 0;
        loop {
            if k == free {
                return best;
            }
            idx[k] += 1;
            if idx[k] <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn random_program(k: u64) -> QpSpec {
    let mut r = rng::stream(3, "acceptance/qp", &[k]);
    let n = r.random_range(1..=3usize);
    let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-0.2..0.2));
    let sigma = &a * a.transpose() + DMatrix::identity(n, n) * 1e-4;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let weight_cap: f64 = r.random_range(0.2..=1.0);
    let budget = if n as f64 * weight_cap >= 1.0 && r.random_bool(0.3) { Budget::SumToOne } else { Budget::None };
    QpSpec {
        expected_returns: (0..n).map(|_| r.random_range(-0.05..0.1)).collect(),
        sigma: CovEstimate::from_matrix(sigma).unwrap(),
        risk_cap: 10f64.powf(r.random_range(-4.0..-1.0)),
        turnover_cap: r.random_range(0.05..1.0),
        weight_cap,
        prev_weights: (0..n).map(|_| r.random_range(0.0..weight_cap)).collect(),
        budget,
        turnover_mode: if r.random_bool(0.3) { TurnoverMode::AggregateL1 } else { TurnoverMode::Elementwise },
    }
}

#[test]
fn criterion_3_qp_oracle_equivalence() {
    let started = Instant::now();
    let opts = SolverOptions::default();
    let mut problems = Vec::new();
    let (mut solved, mut infeasible) = (0, 0);
    for k in 0..QP_SPECS as u64 {
        let s = random_program(k);
        let oracle = grid_oracle(&s);
        match solve_weights(&s, &opts) {
            Ok(w) => {
                solved += 1;
                if !feasible(&s, &w, QP_CONSTRAINT_TOL) {
                    problems.push(format!("spec {k}: constraint violated by {w:?}"));
                } else if s.objective(&w) < oracle - QP_OBJECTIVE_SLACK {
                    problems.push(format!("spec {k}: objective {} below oracle {oracle}", s.objective(&w)));
                }
            }
            Err(Error::Infeasible { .. }) => {
                infeasible += 1;
                if oracle > f64::NEG_INFINITY {
                    problems.push(format!("spec {k}: reported infeasible, oracle found {oracle}"));
                }
            }
            Err(e) => problems.push(format!("spec {k}: {e}")),
        }
    }

    let sphere = QpSpec {
        expected_returns: vec![0.1, 0.2],
        sigma: CovEstimate::from_matrix(DMatrix::identity(2, 2)).unwrap(),
        risk_cap: 0.04,
        turnover_cap: 1.0,
        weight_cap: 1.0,
        prev_weights: vec![0.0, 0.0],
        budget: Budget::None,
        turnover_mode: TurnoverMode::Elementwise,
    };
    // maximizer of rᵀw on the sphere ‖w‖ = 0.2 is 0.2 r / ‖r‖
    let norm = (0.1f64.powi(2) + 0.2f64.powi(2)).sqrt();
    let expected = [0.2 * 0.1 / norm, 0.2 * 0.2 / norm];
    let w = solve_weights(&sphere, &opts).unwrap();
    let sphere_err = w.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let elapsed = started.elapsed();
    verdict(
        3,
        "QP oracle equivalence",
        problems.is_empty() && sphere_err <= QP_SPHERE_TOL && within(elapsed, QP_BUDGET_SECS),
        &format!(
            "{QP_SPECS} programs ({solved} solved, {infeasible} infeasible), {} problems, sphere w = ({:.5}, {:.5}) err {sphere_err:.1e}, {elapsed:.2?} of {QP_BUDGET_SECS}s; first: {:?}",
            problems.len(),
            w[0],
            w[1],
            problems.first()
        ),
    );
}

// ---------------------------------------------------------------- criterion 4

const DRAWDOWN_SERIES: usize = 1_000;
const SPEARMAN_TOL: f64 = 1e-12;

fn brute_force_drawdown(returns: &[f64]) -> f64 {
    let mut equity = vec![1.0];
    for r in returns {
        let last = *equity.last().unwrap();
        equity.push(last * (1.0 + r));
    }
    let mut worst = 0.0f64;
    for i in 0..equity.len() {
        for j in i..equity.len() {
            worst = worst.max(1.0 - equity[j] / equity[i]);
        }
    }
    worst
}

/// `1 − 6 Σ d² / (n (n² − 1))` on distinct values.
fn rank_formula_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_4_metric_oracles() {
    let mut r = rng::stream(4, "acceptance/metrics", &[]);
    let mut problems = Vec::new();

    for k in 0..DRAWDOWN_SERIES {
        let len = r.random_range(0..120);
        let series: Vec<f64> = (0..len).map(|_| r.random_range(-0.3..0.3)).collect();
        let (got, want) = (max_drawdown(&series), brute_force_drawdown(&series));
        if got.to_bits() != want.to_bits() {
            problems.push(format!("drawdown series {k}: {got} vs {want}"));
        }
    }

    let mut worst_ic = 0.0f64;
    for k in 0..200 {
        let n = r.random_range(3..80);
        let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let y: Vec<f64> = (0..n).map(|i| x[i] * r.random_range(-1.0..1.0) + r.random::<f64>()).collect();
        let want = rank_formula_spearman(&x, &y);
        // a second, all-masked date absorbs the horizon mask
        let dates: Vec<_> = alphaforge::synthetic::business_dates(chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 2);
        let names = alphaforge::synthetic::instrument_names(n);
        let observed: Vec<bool> = (0..2 * n).map(|k| k < n).collect();
        let pad = |v: Vec<f64>| v.into_iter().chain(std::iter::repeat_n(0.0, n)).collect::<Vec<_>>();
        let fm = FactorMatrix::new(dates.clone().into(), names.clone().into(), pad(x), observed.clone()).unwrap();
        let ym = FactorMatrix::new(dates.into(), names.into(), pad(y), observed).unwrap();
        let fwd = ForwardReturns::from_surface(ym, 1).unwrap();
        let got = information_coefficient(&fm, &fwd, IcMethod::Spearman).unwrap()[0].unwrap();
        worst_ic = worst_ic.max((got - want).abs());
        if (got - want).abs() > SPEARMAN_TOL {
            problems.push(format!("spearman case {k}: {got} vs {want}"));
        }
    }

    let names = alphaforge::synthetic::instrument_names(6);
    let dates = alphaforge::synthetic::business_dates(chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 40);
    let mut ws = WeightSeries::new(names.into());
    let mut prev = vec![0.0; 6];
    let mut expected = Vec::new();
    for d in dates {
        let w: Vec<f64> = (0..6).map(|_| r.random_range(-0.5..0.5)).collect();
        let mut l1 = 0.0;
        for i in 0..6 {
            l1 += (w[i] - prev[i]).abs();
        }
        expected.push(0.5 * l1);
        prev.clone_from(&w);
        ws.push(d, w).unwrap();
    }
    let got = turnover(&ws);
    if got.iter().zip(&expected).any(|(a, b)| a.to_bits() != b.to_bits()) || got.len() != expected.len() {
        problems.push("turnover differs from 0.5 L1".into());
    }

    for k in 0..1000 {
        let total: u64 = if k % 10 == 0 { r.random_range(0..u64::MAX / 2) } else { r.random_range(0..1_000_000) };
        let schedule = if k % 2 == 0 {
            SliceSchedule::Twap(r.random_range(1..50))
        } else {
            SliceSchedule::Vwap((0..r.random_range(1..30)).map(|j| if j == 0 { 1.0 } else { r.random::<f64>() }).collect())
        };
        let parts = split_order(total, &schedule).unwrap();
        if parts.iter().sum::<u64>() != total {
            problems.push(format!("split {k}: {:?} of {total}", schedule));
        }
    }

    verdict(
        4,
        "metric oracles",
        problems.is_empty(),
        &format!(
            "{DRAWDOWN_SERIES} drawdown series exact, spearman max err {worst_ic:.1e} (tol {SPEARMAN_TOL:.0e}), 40 turnover steps, 1000 order splits, {} problems; first: {:?}",
            problems.len(),
            problems.first()
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

const RECOVERY_RATIO: f64 = 0.8;
const RECOVERY_BUDGET_SECS: u64 = 600;

fn fingerprint(result: &alphaforge::miner::MineResult) -> String {
    let mut s = format!("evaluations {}\n", result.evaluations);
    for g in &result.history {
        s += &g.csv_row();
        s.push('\n');
    }
    for c in &result.candidates {
        s += &format!("{} {:016x} {} {}\n", c.text(), c.fitness.to_bits(), c.birth_generation, c.report.csv_row("c"));
    }
    s
}

#[test]
fn criterion_5_planted_factor_recovery() {
    let started = Instant::now();
    let market = planted_market(&PlantedSpec::default()).unwrap();
    let full_ic = |e: &Expr| {
        mean_ic(&information_coefficient(&evaluate(e, &market.panel).unwrap(), &market.fwd, IcMethod::Spearman).unwrap())
    };
    let planted_ic = full_ic(&market.planted);
    let cfg = MinerConfig {
        seed: 7,
        population_size: 200,
        generations: 40,
        operators: vec![Op::Neg, Op::Rank, Op::TsCorr],
        ..MinerConfig::default()
    };
    let one = mine(&market.panel, &market.fwd, &[], &MinerConfig { workers: 1, ..cfg.clone() }, |_| {}).unwrap();
    let eight = mine(&market.panel, &market.fwd, &[], &MinerConfig { workers: 8, ..cfg }, |_| {}).unwrap();
    let identical = fingerprint(&one) == fingerprint(&eight);
    let (top_text, top_ic) = one
        .candidates
        .first()
        .map(|c| (c.text(), full_ic(&c.expr)))
        .unwrap_or_else(|| ("<none>".into(), f64::NAN));
    let elapsed = started.elapsed();
    verdict(
        5,
        "planted-factor recovery",
        top_ic >= RECOVERY_RATIO * planted_ic && identical && within(elapsed, RECOVERY_BUDGET_SECS),
        &format!(
            "planted ic {planted_ic:.4}, top `{top_text}` ic {top_ic:.4} (need >= {:.4}), identical at 1 and 8 workers {identical}, {elapsed:.1?} of {RECOVERY_BUDGET_SECS}s",
            RECOVERY_RATIO * planted_ic
        ),
    );
}

// ---------------------------------------------------------------- criterion 6

const LAW_QUANTILE: f64 = 0.1;
const LAW_RATIO_RANGE: (f64, f64) = (0.5, 2.0);
const LAW_BUDGET_SECS: u64 = 60;

#[test]
fn criterion_6_fundamental_law() {
    let started = Instant::now();
    let spec = IcExperimentSpec::default();
    let (factor, fwd) = ic_experiment(&spec).unwrap();
    let ic = mean_ic(&information_coefficient(&factor, &fwd, IcMethod::Spearman).unwrap());
    let book = quantile_longshort_returns(&factor, &fwd, LAW_QUANTILE, 0.0).unwrap();
    let ir = sharpe(&book.realized(), 252.0).unwrap();
    let per_date = fundamental_law_ir(ic, Breadth::Rebalances.count(252.0, spec.n_instruments));
    let per_decision = fundamental_law_ir(ic, Breadth::Decisions.count(252.0, spec.n_instruments));
    let ratio = ir / per_date;
    let elapsed = started.elapsed();
    verdict(
        6,
        "fundamental-law check",
        ratio >= LAW_RATIO_RANGE.0 && ratio <= LAW_RATIO_RANGE.1 && within(elapsed, LAW_BUDGET_SECS),
        &format!(
            "{}x{} seed {}, ic {ic:.4}, realized ir {ir:.2}, ic*sqrt(252) = {per_date:.2}, ratio {ratio:.2} (need [{}, {}]); \
             informational: breadth n*252 gives {per_decision:.2}, ratio {:.2}; {elapsed:.2?} of {LAW_BUDGET_SECS}s",
            spec.n_instruments,
            spec.n_dates,
            spec.seed,
            LAW_RATIO_RANGE.0,
            LAW_RATIO_RANGE.1,
            ir / per_decision
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

const DAG_COMMITS: usize = 1_000;
const T0: &str = "2024-01-02T00:00:00Z";

fn base_fields() -> BTreeSet<String> {
    ["close", "volume", "open"].map(String::from).into()
}

/// Every factor a record reads appears earlier in the order.
fn prerequisites_first(base: &FactorBase, order: &[String]) -> bool {
    let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(k, id)| (id.as_str(), k)).collect();
    order.iter().enumerate().all(|(k, id)| {
        base.get(id).unwrap().depends_on.iter().all(|d| match d {
            Dependency::Factor(p) => pos.get(p.as_str()).is_some_and(|&j| j < k),
            Dependency::Field(_) => true,
        })
    })
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_alphaforge")
}

#[test]
fn criterion_7_factor_base_and_scheduler() {
    let mut r = rng::stream(7, "acceptance/dag", &[]);
    let mut base = FactorBase::new();
    let fields: Vec<String> = base_fields().into_iter().collect();
    let mut names: Vec<String> = Vec::new();
    let mut rejected = 0;
    for k in 0..DAG_COMMITS {
        let mut pick = || {
            if !names.is_empty() && r.random_bool(0.6) {
                names[r.random_range(0..names.len())].clone()
            } else {
                fields[r.random_range(0..fields.len())].clone()
            }
        };
        let (x, y) = (pick(), pick());
        let text = format!("ts_corr({x}, {y}, {})", r.random_range(2..30));
        let name = format!("f{k}");
        let f = NewFactor {
            name: name.clone(),
            expr: parse(&text).unwrap(),
            created_at: T0.into(),
            metrics: None,
        };
        match base.commit(f, &base_fields()) {
            Ok(_) => names.push(name),
            Err(Error::DuplicateFactor(_)) => rejected += 1,
            Err(e) => panic!("{e}"),
        }
    }
    let graph = base.graph();
    let mut orders = vec![graph.schedule_all().unwrap()];
    for _ in 0..100 {
        let targets: BTreeSet<String> =
            (0..r.random_range(1..5)).map(|_| base.records()[r.random_range(0..base.len())].id.clone()).collect();
        orders.push(base.schedule(&targets).unwrap());
    }
    let orders_ok = orders.iter().all(|o| prerequisites_first(&base, o));
    let complete = orders[0].len() == base.len();

    let dir = tempfile::tempdir().unwrap();
    // each record names the expression of the record it reads
    let record = |name: &str, expr: &str, dep_expr: &str| {
        format!(
            "{{\"id\":\"{}\",\"name\":\"{name}\",\"expr\":\"{expr}\",\"created_at\":\"{T0}\",\"metrics\":null,\"depends_on\":[\"factor:{}\"],\"status\":\"active\"}}\n",
            factor_id(expr),
            factor_id(dep_expr)
        )
    };
    let two = record("x", "rank(y)", "rank(x)") + &record("y", "rank(x)", "rank(y)");
    let three = record("p", "rank(s)", "rank(q)") + &record("q", "rank(p)", "rank(s)") + &record("s", "rank(q)", "rank(p)");
    let mut exits = Vec::new();
    for (k, text) in [two, three].iter().enumerate() {
        let path = dir.path().join(format!("cycle{k}.jsonl"));
        std::fs::write(&path, text).unwrap();
        let status = Command::new(binary())
            .args(["schedule", "--set"])
            .arg(format!("factorbase.path={}", path.display()))
            .arg("--out")
            .arg(dir.path())
            .output()
            .unwrap();
        exits.push(status.status.code());
    }
    let cycles_ok = exits.iter().all(|c| *c == Some(2));

    verdict(
        7,
        "factor base and scheduler",
        orders_ok && complete && cycles_ok,
        &format!(
            "{} records from {DAG_COMMITS} commits ({rejected} duplicates rejected), {} schedules checked pairwise {orders_ok}, cycle fixture exits {exits:?}",
            base.len(),
            orders.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

const RIDGE_OLS_TOL: f64 = 1e-8;

/// Ordinary least squares with intercept via normal equations and Gaussian
/// elimination with partial pivoting. Returns `(slopes, intercept)`.
fn normal_equations(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let k = xs[0].len() + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (x, y) in xs.iter().zip(ys) {
        let row: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += row[i] * row[j];
            }
            a[i][k] += row[i] * y;
        }
    }
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for i in 0..k {
            if i != c {
                let f = a[i][c] / a[c][c];
                for j in c..=k {
                    a[i][j] -= f * a[c][j];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|i| a[i][k] / a[i][i]).collect();
    (beta[1..].to_vec(), beta[0])
}

#[test]
fn criterion_8_ridge_invariants() {
    let panel = generate_market(&MarketSpec {
        n_dates: 60,
        n_instruments: 25,
        missing_fraction: 0.03,
        seed: 8,
        ..MarketSpec::default()
    })
    .unwrap();
    let factors: Vec<FactorMatrix> = ["rank(close)", "ts_mean(rank(volume), 5)", "rank(ts_delta(close, 3))"]
        .iter()
        .map(|s| evaluate(&parse(s).unwrap(), &panel).unwrap())
        .collect();
    let fwd = ForwardReturns::from_prices(&panel, "close", 1).unwrap();
    let window = 0..panel.n_dates();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for d in window.clone() {
        for i in 0..panel.n_instruments() {
            let row: Option<Vec<f64>> = factors.iter().map(|f| f.get(d, i)).collect();
            if let (Some(row), Some(y)) = (row, fwd.surface().get(d, i)) {
                xs.push(row);
                ys.push(y);
            }
        }
    }
    let (b_ols, a_ols) = normal_equations(&xs, &ys);
    let model = fit(&factors, &fwd, window.clone(), 0.0).unwrap();
    let (b, a) = model.raw_coefficients();
    let ols_err = b
        .iter()
        .zip(&b_ols)
        .chain(std::iter::once((&a, &a_ols)))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);

    let grid = [0.0, 1e-4, 1e-3, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0];
    let norms: Vec<f64> = grid.iter().map(|&l| fit(&factors, &fwd, window.clone(), l).unwrap().coefficient_norm()).collect();
    let monotone = norms.windows(2).all(|w| w[1] <= w[0]);

    let mut zeroed = model.clone();
    zeroed.coefficients[1] = 0.0;
    let importance = permutation_importance(&zeroed, &factors, &fwd, 10, 8).unwrap();
    let silent = &importance.factors[1];
    let zero_importance = silent.mean_drop == 0.0 && silent.drops.iter().all(|d| *d == 0.0);

    verdict(
        8,
        "ridge invariants",
        ols_err <= RIDGE_OLS_TOL && monotone && zero_importance,
        &format!(
            "{} rows, max |ridge(0) - ols| {ols_err:.1e} (tol {RIDGE_OLS_TOL:.0e}), norms over {} penalties monotone {monotone}, zeroed factor importance {} over {} repetitions",
            ys.len(),
            grid.len(),
            silent.mean_drop,
            silent.drops.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn pipeline(config: &Path, out: &Path) -> Vec<Option<i32>> {
    let steps: [&[&str]; 5] = [
        &["ingest"],
        &["mine"],
        &["backtest"],
        &[
            "backtest",
            "--set",
            "run.id=opt",
            "--set",
            "run.source=run",
            "--set",
            "backtest.rule=optimizer",
            "--set",
            "backtest.signal=top",
        ],
        &["report"],
    ];
    steps
        .iter()
        .map(|args| {
            Command::new(binary())
                .args(*args)
                .arg("--config")
                .arg(config)
                .arg("--out")
                .arg(out)
                .output()
                .unwrap()
                .status
                .code()
        })
        .collect()
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let panel = generate_market(&MarketSpec {
        n_dates: 120,
        n_instruments: 30,
        missing_fraction: 0.02,
        seed: 9,
        ..MarketSpec::default()
    })
    .unwrap();
    let panel_path = dir.path().join("panel.csv");
    let mut buf = Vec::new();
    write_panel(&panel, &mut buf, true).unwrap();
    std::fs::write(&panel_path, buf).unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        format!(
            "seed = 9\npanel.path = {}\npreprocess.impute = ffill\nminer.population = 30\nminer.generations = 4\n\
             miner.group_fields = sector\ncombiner.train = 40\ncombiner.valid = 20\ncombiner.test = 20\ncombiner.step = 20\n",
            panel_path.display()
        ),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes_a = pipeline(&config, &a);
    let codes_b = pipeline(&config, &b);
    let (ta, tb) = (tree(&a), tree(&b));
    let all_ok = codes_a.iter().chain(&codes_b).all(|c| *c == Some(0));
    let differing: Vec<&PathBuf> = ta.keys().chain(tb.keys()).filter(|p| ta.get(*p) != tb.get(*p)).collect();
    verdict(
        9,
        "end-to-end determinism",
        all_ok && !ta.is_empty() && differing.is_empty(),
        &format!(
            "exit codes {codes_a:?} / {codes_b:?}, {} files, {} bytes, differing {differing:?}",
            ta.len(),
            ta.values().map(Vec::len).sum::<usize>()
        ),
    );
}
