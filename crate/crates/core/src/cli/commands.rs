use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::combiner::rolling_fit_predict;
use crate::dsl::{parse, FactorMatrix};
use crate::error::{Error, Result};
use crate::factorbase::{FactorBase, NewFactor, RecordMetrics};
use crate::fsutil::write_atomic;
use crate::metrics::{forward_splits, ForwardReturns, REPORT_HEADER};
use crate::miner::{mine, GenerationStats};
use crate::panel::{load_panel, preprocess, write_panel, PanelFrame};
use crate::portfolio::{run_backtest, ScoreSource, WeightRule};

use super::config::RunConfig;
use super::svg::line_chart;

pub struct Context {
    pub cfg: RunConfig,
    pub workers: usize,
}

const PANEL_FILE: &str = "panel.csv";

fn fmt(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Error::io(path, e))?;
    write_atomic(path, &buf)
}

impl Context {
    fn run_dir(&self) -> Result<PathBuf> {
        self.cfg.run_dir()
    }

    fn ingested_panel(&self) -> Result<PanelFrame> {
        let path = self.cfg.panel_path()?;
        if !path.exists() {
            return Err(Error::Data(format!("{} does not exist; run ingest first", path.display())));
        }
        load_panel(&path)
    }

    fn forward_returns(&self, panel: &PanelFrame) -> Result<ForwardReturns> {
        ForwardReturns::from_prices(panel, self.cfg.get("returns.field"), self.cfg.typed("returns.horizon")?)
    }

    fn load_base(&self) -> Result<FactorBase> {
        let path = self.cfg.factorbase_path();
        if path.exists() {
            FactorBase::load(&path)
        } else {
            Ok(FactorBase::new())
        }
    }

    /// Surfaces of every active record, in record order.
    fn active_surfaces(&self, base: &FactorBase, panel: &PanelFrame) -> Result<(Vec<String>, Vec<FactorMatrix>)> {
        let ids: BTreeSet<String> = base.active().map(|r| r.id.clone()).collect();
        let mut computed = base.evaluate_scheduled(&ids, panel)?;
        computed.retain(|(id, _)| ids.contains(id));
        let mut out = (Vec::new(), Vec::new());
        for r in base.active() {
            let k = computed.iter().position(|(id, _)| *id == r.id).expect("scheduled");
            out.0.push(r.name.clone());
            out.1.push(computed[k].1.clone());
        }
        Ok(out)
    }

    pub fn ingest(&self, out: &mut dyn std::io::Write) -> Result<()> {
        let path = self.cfg.get("panel.path");
        if path.is_empty() {
            return Err(Error::Config("panel.path is not set".into()));
        }
        let raw = load_panel(path)?;
        let panel = preprocess(&raw, &self.cfg.preprocess_spec()?)?;
        let dir = self.run_dir()?;
        write_with(&dir.join(PANEL_FILE), |b| write_panel(&panel, b, true))?;
        let dates = panel.dates();
        let summary = format!(
            "dates: {}\ninstruments: {}\nfields: {}\nmissing_fraction: {}\nfirst_date: {}\nlast_date: {}\n",
            panel.n_dates(),
            panel.n_instruments(),
            panel.fields().join(","),
            panel.missing_fraction(),
            dates.first().map_or("NA".into(), |d| d.to_string()),
            dates.last().map_or("NA".into(), |d| d.to_string()),
        );
        write_atomic(&dir.join("ingest_summary.txt"), summary.as_bytes())?;
        out.write_all(summary.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    }

    pub fn mine(&self, out: &mut dyn std::io::Write) -> Result<()> {
        let miner_cfg = self.cfg.miner_config(self.workers)?;
        let panel = self.ingested_panel()?;
        let fwd = self.forward_returns(&panel)?;
        let mut base = self.load_base()?;
        let (_, base_surfaces) = self.active_surfaces(&base, &panel)?;

        eprintln!("{}", GenerationStats::CSV_HEADER);
        let result = mine(&panel, &fwd, &base_surfaces, &miner_cfg, |g| eprintln!("{}", g.csv_row()))?;

        let dir = self.run_dir()?;
        write_with(&dir.join("mining_log.csv"), |b| {
            writeln!(b, "{}", GenerationStats::CSV_HEADER)?;
            for g in &result.history {
                writeln!(b, "{}", g.csv_row())?;
            }
            Ok(())
        })?;
        write_with(&dir.join("candidates.csv"), |b| {
            writeln!(b, "rank,id,fitness,birth_generation,{}", REPORT_HEADER.replacen("name", "expr", 1))?;
            for (k, c) in result.candidates.iter().enumerate() {
                let id = crate::factorbase::factor_id(&c.text());
                writeln!(b, "{},{id},{},{},{}", k + 1, fmt(c.fitness), c.birth_generation, c.report.csv_row(&c.text()))?;
            }
            Ok(())
        })?;

        let mut committed = 0;
        if self.cfg.flag("miner.commit")? {
            let fields: BTreeSet<String> = panel.fields().iter().cloned().collect();
            for c in &result.candidates {
                let id = crate::factorbase::factor_id(&c.text());
                let f = NewFactor {
                    name: format!("f_{}", &id[..12]),
                    expr: c.expr.clone(),
                    created_at: self.cfg.get("run.timestamp").to_string(),
                    metrics: Some(RecordMetrics::from(&c.report)),
                };
                match base.commit(f, &fields) {
                    Ok(_) => committed += 1,
                    Err(Error::DuplicateFactor(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            base.save(self.cfg.factorbase_path())?;
        }
        let io = |e| Error::io("<stdout>", e);
        writeln!(
            out,
            "evaluated {} expressions, accepted {}, committed {}",
            result.evaluations,
            result.candidates.len(),
            committed
        )
        .map_err(io)?;
        if let Some(c) = result.candidates.first() {
            writeln!(out, "best {} fitness {}", c.text(), fmt(c.fitness)).map_err(io)?;
        }
        Ok(())
    }

    pub fn backtest(&self, out: &mut dyn std::io::Write) -> Result<()> {
        let bt = self.cfg.backtest_config()?;
        let panel = self.ingested_panel()?;
        let dir = self.run_dir()?;
        let signal = self.cfg.get("backtest.signal");
        let (label, source) = match signal {
            "combined" => {
                let base = self.load_base()?;
                let (all_names, all_surfaces) = self.active_surfaces(&base, &panel)?;
                if all_surfaces.is_empty() {
                    return Err(Error::Data("the factor base has no active factors; run mine first".into()));
                }
                // long warm-ups leave too few rows where every factor is observed
                let min_coverage: f64 = self.cfg.typed("combiner.min_coverage")?;
                let cells = (panel.n_dates() * panel.n_instruments()).max(1) as f64;
                let (names, surfaces): (Vec<String>, Vec<FactorMatrix>) = all_names
                    .into_iter()
                    .zip(all_surfaces)
                    .filter(|(_, s)| s.observed_count() as f64 / cells >= min_coverage)
                    .unzip();
                if surfaces.is_empty() {
                    return Err(Error::Data(format!(
                        "no active factor is observed on at least {min_coverage} of cells"
                    )));
                }
                let fwd = self.forward_returns(&panel)?;
                let plan = forward_splits(
                    panel.n_dates(),
                    self.cfg.typed("combiner.train")?,
                    self.cfg.typed("combiner.valid")?,
                    self.cfg.typed("combiner.test")?,
                    self.cfg.typed("combiner.step")?,
                )?;
                let lambdas: Vec<f64> = self.cfg.list("combiner.lambdas")?;
                let rolled = rolling_fit_predict(&surfaces, &fwd, &plan, &lambdas)?;
                if !rolled.skipped_windows.is_empty() {
                    eprintln!(
                        "combiner: {} of {} windows lacked complete rows and were skipped",
                        rolled.skipped_windows.len(),
                        plan.windows.len()
                    );
                }
                if let Some(last) = rolled.models.last() {
                    let model = last.clone().with_ids(names.clone())?;
                    write_with(&dir.join("combiner_model.csv"), |b| model.write_csv(b))?;
                }
                (format!("combined:{}", names.len()), ScoreSource::Surface(rolled.scores))
            }
            "top" => {
                let base = self.load_base()?;
                let best = base
                    .active()
                    .max_by(|a, b| {
                        let ic = |r: &crate::factorbase::FactorRecord| {
                            r.metrics.as_ref().and_then(|m| m.ic_mean).unwrap_or(f64::NEG_INFINITY)
                        };
                        ic(a).total_cmp(&ic(b)).then_with(|| b.id.cmp(&a.id))
                    })
                    .ok_or_else(|| Error::Data("the factor base has no active factors; run mine first".into()))?;
                (best.expr.clone(), ScoreSource::Expr(best.parsed_expr()?))
            }
            text => {
                let e = parse(text)?;
                (e.canonical(), ScoreSource::Expr(e))
            }
        };
        let result = run_backtest(&panel, &source, &bt)?;
        write_with(&dir.join("equity.csv"), |b| result.write_equity_csv(b))?;
        write_with(&dir.join("weights.csv"), |b| result.weights.write_csv(b))?;
        write_with(&dir.join("ic.csv"), |b| result.report.write_ic_csv(&result.dates, b))?;
        write_with(&dir.join("report.csv"), |b| {
            writeln!(b, "{REPORT_HEADER}")?;
            writeln!(b, "{}", result.report.csv_row(&label))
        })?;
        let rule = match &bt.rule {
            WeightRule::Quantile(q) => format!("quantile {q}"),
            WeightRule::Optimizer(_) => "optimizer".to_string(),
        };
        let r = &result.report;
        let summary = format!(
            "signal: {label}\nrule: {rule}\ndates: {}\nrebalances: {}\nskipped: {}\nfinal_equity: {}\nannualized_return: {}\nsharpe: {}\nmax_drawdown: {}\navg_turnover: {}\nic_mean: {}\nicir: {}\n",
            result.dates.len(),
            result.weights.len(),
            result.skipped.len(),
            fmt(*result.equity.last().unwrap_or(&1.0)),
            fmt(r.annualized_return),
            fmt(r.sharpe),
            fmt(r.max_drawdown),
            fmt(r.avg_turnover),
            fmt(r.ic_mean),
            fmt(r.icir),
        );
        write_atomic(&dir.join("summary.txt"), summary.as_bytes())?;
        out.write_all(summary.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    }

    pub fn report(&self, out: &mut dyn std::io::Write) -> Result<()> {
        let runs = self.cfg.out_dir().join("runs");
        let mut ids: Vec<String> = match std::fs::read_dir(&runs) {
            Ok(entries) => entries
                .filter_map(|e| e.ok())
                .filter(|e| e.path().join("report.csv").is_file())
                .filter_map(|e| e.file_name().into_string().ok())
                .collect(),
            Err(e) => return Err(Error::io(&runs, e)),
        };
        ids.sort();
        if ids.is_empty() {
            return Err(Error::Data(format!("no backtest reports under {}", runs.display())));
        }
        let svg = self.cfg.flag("report.svg")?;
        let mut rows = Vec::new();
        for id in &ids {
            let dir = runs.join(id);
            let path = dir.join("report.csv");
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let row = text
                .lines()
                .nth(1)
                .ok_or_else(|| Error::Data(format!("{} has no data row", path.display())))?;
            rows.push(format!("{id},{row}"));
            if svg {
                for (file, column, title) in [("equity.csv", "equity", "equity"), ("ic.csv", "ic", "information coefficient")] {
                    let path = dir.join(file);
                    if let Some((first, last, ys)) = read_series(&path, column)? {
                        let chart = line_chart(&format!("{id} {title}"), (&first, &last), &ys);
                        write_atomic(&dir.join(file.replace(".csv", ".svg")), chart.as_bytes())?;
                    }
                }
            }
        }
        let mut text = format!("run_id,{REPORT_HEADER}\n");
        for r in &rows {
            text.push_str(r);
            text.push('\n');
        }
        write_atomic(&self.cfg.out_dir().join("report.csv"), text.as_bytes())?;
        out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
    }

    pub fn schedule(&self, targets: &[String], out: &mut dyn std::io::Write) -> Result<()> {
        let path = self.cfg.factorbase_path();
        let base = FactorBase::load(&path)?;
        let mut wanted: Vec<String> = targets.to_vec();
        if wanted.is_empty() {
            wanted = self.cfg.list("schedule.targets")?;
        }
        let ids: BTreeSet<String> = if wanted.is_empty() {
            base.active().map(|r| r.id.clone()).collect()
        } else {
            wanted
                .iter()
                .map(|t| {
                    base.get(t)
                        .or_else(|| base.by_name(t))
                        .map(|r| r.id.clone())
                        .ok_or_else(|| Error::UnresolvedDependency(t.clone()))
                })
                .collect::<Result<_>>()?
        };
        for id in base.schedule(&ids)? {
            writeln!(out, "{id}").map_err(|e| Error::io("<stdout>", e))?;
        }
        Ok(())
    }
}

/// `(first label, last label, values)` of a two-column `label,value` CSV.
fn read_series(path: &Path, column: &str) -> Result<Option<(String, String, Vec<f64>)>> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.split(',').nth(1) != Some(column) {
        return Err(Error::Data(format!("{} lacks a `{column}` column", path.display())));
    }
    let mut labels = Vec::new();
    let mut ys = Vec::new();
    for line in lines {
        let (label, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Data(format!("{}: bad row `{line}`", path.display())))?;
        labels.push(label.to_string());
        ys.push(v.parse().unwrap_or(f64::NAN));
    }
    let first = labels.first().cloned().unwrap_or_default();
    let last = labels.last().cloned().unwrap_or_default();
    Ok(Some((first, last, ys)))
}
