use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::dsl::{evaluate, Expr, FactorMatrix};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_factor, redundancy, FactorReport, ForwardReturns, MIN_IC_OBSERVATIONS};
use crate::panel::PanelFrame;
use crate::rng::{self, StreamRng};

use super::variation::{crossover, mutate, random_tree};
use super::MinerConfig;

#[derive(Debug, Clone)]
pub struct Candidate {
    pub expr: Expr,
    /// The configured statistic of `report`; `-inf` when it is undefined or
    /// the report covers too few dates.
    pub fitness: f64,
    /// Evaluation on the validation dates.
    pub report: FactorReport,
    pub birth_generation: usize,
}

impl Candidate {
    pub fn text(&self) -> String {
        self.expr.canonical()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    /// Mean over members with finite fitness; NaN when there are none.
    pub mean_fitness: f64,
}

impl GenerationStats {
    pub const CSV_HEADER: &'static str = "generation,best_fitness,mean_fitness";

    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.generation, self.best_fitness, self.mean_fitness)
    }
}

#[derive(Debug, Clone)]
pub struct MineResult {
    /// Accepted candidates, best first.
    pub candidates: Vec<Candidate>,
    pub history: Vec<GenerationStats>,
    /// Distinct expressions evaluated.
    pub evaluations: usize,
}

/// Descending fitness, then ascending canonical text.
fn rank_order(fa: f64, ta: &str, fb: f64, tb: &str) -> Ordering {
    fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then_with(|| ta.cmp(tb))
}

/// First date of the validation range.
pub fn validation_start(n_dates: usize, fraction: f64) -> usize {
    let v = (n_dates as f64 * fraction).ceil() as usize;
    n_dates - v.clamp(1, n_dates.max(1))
}

struct Evaluator<'a> {
    panel: &'a PanelFrame,
    fwd: ForwardReturns,
    base: Vec<FactorMatrix>,
    start: usize,
    /// Reports covering fewer IC dates than this score `-inf`.
    min_dates: usize,
    cfg: &'a MinerConfig,
}

impl Evaluator<'_> {
    /// Validation slice of the expression's surface. The expression is
    /// evaluated on the whole panel so windows can reach back before the slice.
    fn surface(&self, expr: &Expr) -> Result<FactorMatrix> {
        let nd = self.panel.n_dates();
        Ok(evaluate(expr, self.panel)?.slice_dates(self.start..nd))
    }

    fn score(&self, expr: &Expr) -> Result<(f64, FactorReport)> {
        let s = self.surface(expr)?;
        let report = evaluate_factor(&s, &self.fwd, &self.base, &self.cfg.report)?;
        let fitness = if report.n_dates_evaluated < self.min_dates {
            f64::NEG_INFINITY
        } else {
            self.cfg.fitness.extract(&report)
        };
        Ok((fitness, report))
    }
}

struct Scored {
    expr: Expr,
    fitness: f64,
    report: FactorReport,
    birth_generation: usize,
}

fn tournament(ranked: &[usize], size: usize, rng: &mut StreamRng) -> usize {
    // `ranked[r]` is the population index at rank r; the lowest rank drawn wins
    let best = (0..size).map(|_| rng.random_range(0..ranked.len())).min().expect("size >= 1");
    ranked[best]
}

/// Genetic search over factor expressions.
///
/// Fitness is measured on the trailing `validation_fraction` of dates. The
/// output keeps candidates with fitness at least `min_fitness` whose pooled
/// correlation with `base` and every earlier accepted candidate stays within
/// `redundancy_threshold`, all on the validation dates. `base` surfaces must
/// share the panel's axes.
pub fn mine(
    panel: &PanelFrame,
    fwd: &ForwardReturns,
    base: &[FactorMatrix],
    cfg: &MinerConfig,
    mut progress: impl FnMut(&GenerationStats),
) -> Result<MineResult> {
    cfg.validate()?;
    if cfg.generations == 0 {
        return Err(Error::Config("generations must be at least 1".into()));
    }
    if fwd.surface().dates() != panel.dates() || fwd.surface().instruments() != panel.instruments() {
        return Err(Error::AxisMismatch("forward returns do not share the panel axes".into()));
    }
    for f in cfg.fields.iter().chain(&cfg.group_fields) {
        if !panel.has_field(f) {
            return Err(Error::Config(format!("whitelisted field `{f}` is not in the panel")));
        }
    }
    let nd = panel.n_dates();
    let start = validation_start(nd, cfg.validation_fraction);
    let vfwd = fwd.slice_dates(start..nd);
    if vfwd.surface().observed_count() == 0 {
        return Err(Error::Data("no forward returns on the validation dates".into()));
    }
    let mut vbase = Vec::with_capacity(base.len());
    for b in base {
        fwd.surface().check_aligned(b)?;
        vbase.push(b.slice_dates(start..nd));
    }
    let scorable = (0..vfwd.surface().n_dates())
        .filter(|&d| vfwd.surface().row(d).1.iter().filter(|m| **m).count() >= MIN_IC_OBSERVATIONS)
        .count();
    let ev = Evaluator {
        panel,
        fwd: vfwd,
        base: vbase,
        start,
        min_dates: ((cfg.min_coverage * scorable as f64).ceil() as usize).max(1),
        cfg,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;

    let ops = cfg.usable_operators();
    let mut population: Vec<Expr> = (0..cfg.population_size)
        .map(|k| {
            let mut r = rng::stream(cfg.seed, "miner/init", &[k as u64]);
            random_tree(cfg, &ops, cfg.max_depth, cfg.max_nodes, &mut r)
        })
        .collect();

    let mut seen: BTreeMap<String, Scored> = BTreeMap::new();
    let mut history = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        let texts: Vec<String> = population.iter().map(Expr::canonical).collect();
        let mut fresh: BTreeMap<&str, &Expr> = BTreeMap::new();
        for (t, e) in texts.iter().zip(&population) {
            if !seen.contains_key(t) {
                fresh.insert(t, e);
            }
        }
        let fresh: Vec<(&str, &Expr)> = fresh.into_iter().collect();
        let scored: Vec<Result<(f64, FactorReport)>> =
            pool.install(|| fresh.par_iter().map(|(_, e)| ev.score(e)).collect());
        for ((t, e), s) in fresh.iter().zip(scored) {
            let (fitness, report) = s?;
            seen.insert(
                t.to_string(),
                Scored {
                    expr: (*e).clone(),
                    fitness,
                    report,
                    birth_generation: g,
                },
            );
        }

        let fit: Vec<f64> = texts.iter().map(|t| seen[t].fitness).collect();
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| rank_order(fit[a], &texts[a], fit[b], &texts[b]));
        let finite: Vec<f64> = fit.iter().copied().filter(|f| f.is_finite()).collect();
        let stats = GenerationStats {
            generation: g,
            best_fitness: fit[ranked[0]],
            mean_fitness: if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
        };
        progress(&stats);
        history.push(stats);

        if g + 1 == cfg.generations {
            break;
        }
        let mut next = Vec::with_capacity(cfg.population_size);
        next.push(population[ranked[0]].clone());
        for k in 1..cfg.population_size {
            let mut r = rng::stream(cfg.seed, "miner/breed", &[g as u64, k as u64]);
            let u: f64 = r.random();
            let a = &population[tournament(&ranked, cfg.tournament_size, &mut r)];
            let child = if u < cfg.p_crossover {
                let b = &population[tournament(&ranked, cfg.tournament_size, &mut r)];
                crossover(a, b, cfg, &mut r).value.0
            } else if u < cfg.p_crossover + cfg.p_mutation {
                mutate(a, cfg, &mut r).value
            } else {
                a.clone()
            };
            next.push(child);
        }
        population = next;
    }

    let evaluations = seen.len();
    let mut pool_sorted: Vec<Scored> = seen.into_values().collect();
    pool_sorted.sort_by(|a, b| {
        rank_order(a.fitness, &a.expr.canonical(), b.fitness, &b.expr.canonical())
    });
    let mut accepted: Vec<Candidate> = Vec::new();
    let mut accepted_surfaces = ev.base.clone();
    for s in pool_sorted.into_iter().take(cfg.scan_limit) {
        if accepted.len() >= cfg.max_output {
            break;
        }
        if !(s.fitness >= cfg.min_fitness) {
            break;
        }
        let surface = ev.surface(&s.expr)?;
        if redundancy(&surface, &accepted_surfaces)? > cfg.redundancy_threshold {
            continue;
        }
        accepted_surfaces.push(surface);
        accepted.push(Candidate {
            expr: s.expr,
            fitness: s.fitness,
            report: s.report,
            birth_generation: s.birth_generation,
        });
    }
    Ok(MineResult {
        candidates: accepted,
        history,
        evaluations,
    })
}
