//! Flat `key = value` run configuration.
//!
//! Lines are UTF-8; `#` starts a comment; blank lines are ignored. Every key
//! must appear in [`KEYS`], so a typo is an error instead of a silent default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dsl::{Op, DEFAULT_MAX_NODES};
use crate::error::{Error, Result};
use crate::metrics::{IcMethod, ReportSettings};
use crate::miner::{Fitness, MinerConfig};
use crate::panel::{Impute, PreprocessSpec, Standardize};
use crate::portfolio::{BacktestConfig, Budget, OptimizerRule, Schedule, TurnoverMode, WeightRule};

/// Every accepted key with its default and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "global seed; every randomized stage derives its own stream from it"),
    ("run.id", "run", "name of the run directory under <out.dir>/runs"),
    ("run.source", "", "run id whose ingested panel mine and backtest read; empty means run.id"),
    ("run.timestamp", "1970-01-01T00:00:00Z", "RFC 3339 creation time stamped on committed factors"),
    ("out.dir", "out", "output root"),
    ("panel.path", "", "long-format date,instrument,field,value CSV read by ingest"),
    ("preprocess.impute", "none", "none | ffill"),
    ("preprocess.max_gap", "5", "longest gap forward fill bridges"),
    ("preprocess.winsorize", "0", "cross-sectional clip quantile in [0, 0.5); 0 disables"),
    ("preprocess.standardize", "none", "none | zscore"),
    ("preprocess.fields", "", "comma list of fields to winsorize/standardize; empty means all"),
    ("returns.field", "close", "price field for forward and period returns"),
    ("returns.horizon", "1", "forward return horizon in dates"),
    ("metrics.ic_method", "spearman", "spearman | pearson"),
    ("metrics.quantile", "0.1", "long-short leg fraction for factor reports"),
    ("metrics.cost_rate", "0", "cost per unit of turnover in factor reports"),
    ("metrics.periods_per_year", "252", "annualization factor"),
    ("miner.population", "200", "population size"),
    ("miner.generations", "40", "generations evaluated"),
    ("miner.tournament", "3", "tournament size"),
    ("miner.p_mutation", "0.3", "mutation probability"),
    ("miner.p_crossover", "0.6", "crossover probability"),
    ("miner.max_depth", "6", "expression depth cap"),
    ("miner.max_nodes", "24", "expression node cap"),
    ("miner.fitness", "ic_mean", "ic_mean | icir | sharpe"),
    ("miner.min_fitness", "0", "least validation fitness to keep a candidate"),
    ("miner.redundancy", "0.7", "largest allowed |correlation| with the base and accepted candidates"),
    ("miner.operators", "all", "comma list of operator names, or all"),
    ("miner.fields", "close,volume", "comma list of leaf fields"),
    ("miner.group_fields", "", "comma list of fields usable as group labels"),
    ("miner.windows", "2,3,5,10,20,40", "comma list of window lengths"),
    ("miner.fractions", "0.01,0.05,0.1", "comma list of winsorize fractions"),
    ("miner.constants", "0.5,1,2", "comma list of constant leaves; empty disables them"),
    ("miner.validation_fraction", "0.25", "trailing share of dates fitness is measured on"),
    ("miner.min_coverage", "0.5", "least share of validation dates that must yield an IC"),
    ("miner.max_output", "20", "most candidates accepted per run"),
    ("miner.commit", "true", "append accepted candidates to the factor base"),
    ("factorbase.path", "", "factor base file; empty means <out.dir>/factorbase.jsonl"),
    ("combiner.train", "120", "training dates per window"),
    ("combiner.valid", "40", "validation dates per window"),
    ("combiner.test", "40", "test dates per window"),
    ("combiner.step", "40", "dates between window starts"),
    ("combiner.min_coverage", "0.8", "least share of observed cells for a factor to enter the combination"),
    ("combiner.lambdas", "0,0.01,0.1,1,10", "comma list of ridge penalties"),
    ("backtest.signal", "combined", "combined | top | a factor expression"),
    ("backtest.rule", "quantile", "quantile | optimizer"),
    ("backtest.quantile", "0.1", "leg fraction for the quantile rule"),
    ("backtest.rebalance_every", "1", "rebalance every k-th date"),
    ("backtest.cost_rate", "0", "cost per unit of turnover"),
    ("portfolio.c1", "0.0004", "risk cap on wᵀΣw"),
    ("portfolio.c2", "0.1", "turnover cap against the previous weights"),
    ("portfolio.c3", "0.1", "per-instrument weight cap"),
    ("portfolio.budget", "none", "none | sum_to_one"),
    ("portfolio.turnover_mode", "elementwise", "elementwise | l1"),
    ("portfolio.delta", "0.1", "covariance shrinkage toward scaled identity"),
    ("portfolio.lookback", "60", "trailing dates for the covariance"),
    ("report.svg", "true", "write equity and IC charts"),
    ("schedule.targets", "", "comma list of factor ids or names; empty means all active"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let n = k + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {n}: expected key = value")))?;
            let key = key.trim();
            if !known(key) {
                return Err(Error::Config(format!("line {n}: unknown key `{key}`")));
            }
            if let Some(prev) = seen.insert(key.to_string(), n) {
                return Err(Error::Config(format!("line {n}: `{key}` already set on line {prev}")));
            }
            cfg.values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("every key has a default")
    }

    pub fn typed<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::Config(format!("`{key}` = `{v}`: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Config(format!("`{key}` item `{s}`: {e}"))))
            .collect()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(Error::Config(format!("`{key}` = `{v}` is not a boolean"))),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out.dir"))
    }

    pub fn run_id(&self) -> Result<String> {
        let id = self.get("run.id");
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Config(format!("run.id `{id}` must be nonempty [A-Za-z0-9_-]")));
        }
        Ok(id.to_string())
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.out_dir().join("runs").join(self.run_id()?))
    }

    /// Ingested panel read by mine and backtest.
    pub fn panel_path(&self) -> Result<PathBuf> {
        let dir = match self.get("run.source") {
            "" => self.run_dir()?,
            src => {
                let mut c = self.clone();
                c.set("run.id", src)?;
                c.run_dir()?
            }
        };
        Ok(dir.join("panel.csv"))
    }

    pub fn factorbase_path(&self) -> PathBuf {
        match self.get("factorbase.path") {
            "" => self.out_dir().join("factorbase.jsonl"),
            p => PathBuf::from(p),
        }
    }

    pub fn report_settings(&self) -> Result<ReportSettings> {
        Ok(ReportSettings {
            ic_method: self.typed::<IcMethod>("metrics.ic_method")?,
            quantile: self.typed("metrics.quantile")?,
            cost_rate: self.typed("metrics.cost_rate")?,
            periods_per_year: self.typed("metrics.periods_per_year")?,
        })
    }

    pub fn preprocess_spec(&self) -> Result<PreprocessSpec> {
        let impute = match self.get("preprocess.impute") {
            "none" => Impute::None,
            "ffill" => Impute::ForwardFill {
                max_gap: self.typed("preprocess.max_gap")?,
            },
            v => return Err(Error::Config(format!("preprocess.impute `{v}` is not none or ffill"))),
        };
        let standardize = match self.get("preprocess.standardize") {
            "none" => Standardize::None,
            "zscore" => Standardize::ZscoreCrossSection,
            v => return Err(Error::Config(format!("preprocess.standardize `{v}` is not none or zscore"))),
        };
        let fields: Vec<String> = self.list("preprocess.fields")?;
        let spec = PreprocessSpec {
            impute,
            winsorize_p: self.typed("preprocess.winsorize")?,
            standardize,
            fields: (!fields.is_empty()).then_some(fields),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn miner_config(&self, workers: usize) -> Result<MinerConfig> {
        let operators = match self.get("miner.operators") {
            "all" => Op::all().collect(),
            _ => self
                .list::<String>("miner.operators")?
                .iter()
                .map(|n| Op::from_name(n).ok_or_else(|| Error::Config(format!("unknown operator `{n}`"))))
                .collect::<Result<Vec<_>>>()?,
        };
        let cfg = MinerConfig {
            seed: self.typed("seed")?,
            population_size: self.typed("miner.population")?,
            generations: self.typed("miner.generations")?,
            tournament_size: self.typed("miner.tournament")?,
            p_mutation: self.typed("miner.p_mutation")?,
            p_crossover: self.typed("miner.p_crossover")?,
            max_depth: self.typed("miner.max_depth")?,
            max_nodes: self.typed("miner.max_nodes")?,
            fitness: self.typed::<Fitness>("miner.fitness")?,
            min_fitness: self.typed("miner.min_fitness")?,
            redundancy_threshold: self.typed("miner.redundancy")?,
            operators,
            fields: self.list("miner.fields")?,
            group_fields: self.list("miner.group_fields")?,
            windows: self.list("miner.windows")?,
            fractions: self.list("miner.fractions")?,
            constants: self.list("miner.constants")?,
            validation_fraction: self.typed("miner.validation_fraction")?,
            min_coverage: self.typed("miner.min_coverage")?,
            max_output: self.typed("miner.max_output")?,
            workers,
            report: self.report_settings()?,
            ..MinerConfig::default()
        };
        if cfg.max_nodes > DEFAULT_MAX_NODES {
            return Err(Error::Config(format!("miner.max_nodes exceeds {DEFAULT_MAX_NODES}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backtest_config(&self) -> Result<BacktestConfig> {
        let rule = match self.get("backtest.rule") {
            "quantile" => WeightRule::Quantile(self.typed("backtest.quantile")?),
            "optimizer" => WeightRule::Optimizer(OptimizerRule {
                risk_cap: self.typed("portfolio.c1")?,
                turnover_cap: self.typed("portfolio.c2")?,
                weight_cap: self.typed("portfolio.c3")?,
                budget: match self.get("portfolio.budget") {
                    "none" => Budget::None,
                    "sum_to_one" => Budget::SumToOne,
                    v => return Err(Error::Config(format!("portfolio.budget `{v}` is not none or sum_to_one"))),
                },
                turnover_mode: match self.get("portfolio.turnover_mode") {
                    "elementwise" => TurnoverMode::Elementwise,
                    "l1" => TurnoverMode::AggregateL1,
                    v => return Err(Error::Config(format!("portfolio.turnover_mode `{v}` is not elementwise or l1"))),
                },
                shrinkage: self.typed("portfolio.delta")?,
                lookback: self.typed("portfolio.lookback")?,
                ..OptimizerRule::default()
            }),
            v => return Err(Error::Config(format!("backtest.rule `{v}` is not quantile or optimizer"))),
        };
        let every: usize = self.typed("backtest.rebalance_every")?;
        if every == 0 {
            return Err(Error::Config("backtest.rebalance_every must be at least 1".into()));
        }
        Ok(BacktestConfig {
            price_field: self.get("returns.field").to_string(),
            schedule: Schedule::Every(every),
            rule,
            cost_rate: self.typed("backtest.cost_rate")?,
            periods_per_year: self.typed("metrics.periods_per_year")?,
            ic_method: self.typed("metrics.ic_method")?,
        })
    }

    /// `key = value` lines for every key, in key order.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
