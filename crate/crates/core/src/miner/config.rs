use crate::dsl::{Op, ParamKind, DEFAULT_MAX_DEPTH, DEFAULT_MAX_NODES};
use crate::error::{Error, Result};
use crate::metrics::{FactorReport, ReportSettings};

/// Statistic the search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fitness {
    Icir,
    #[default]
    IcMean,
    Sharpe,
}

impl Fitness {
    /// The configured statistic; undefined values rank last as `-inf`.
    pub fn extract(self, report: &FactorReport) -> f64 {
        let v = match self {
            Fitness::Icir => report.icir,
            Fitness::IcMean => report.ic_mean,
            Fitness::Sharpe => report.sharpe,
        };
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

impl std::str::FromStr for Fitness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icir" => Ok(Fitness::Icir),
            "ic_mean" => Ok(Fitness::IcMean),
            "sharpe" => Ok(Fitness::Sharpe),
            other => Err(Error::Config(format!("unknown fitness `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinerConfig {
    pub seed: u64,
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub p_mutation: f64,
    pub p_crossover: f64,
    pub max_depth: usize,
    pub max_nodes: usize,
    pub fitness: Fitness,
    pub min_fitness: f64,
    pub redundancy_threshold: f64,
    pub operators: Vec<Op>,
    /// Meta fields usable as leaves.
    pub fields: Vec<String>,
    /// Fields usable as group labels by group and neutralize operators.
    pub group_fields: Vec<String>,
    pub windows: Vec<usize>,
    pub fractions: Vec<f64>,
    /// Constants usable as leaves; empty disables constant leaves.
    pub constants: Vec<f64>,
    /// Probability that a leaf is a constant when constants are enabled.
    pub p_constant: f64,
    /// Trailing share of dates on which fitness is measured.
    pub validation_fraction: f64,
    /// Least share of scorable validation dates that must yield an IC;
    /// sparser candidates get `-inf` fitness.
    pub min_coverage: f64,
    /// Offspring resampling attempts before passing a parent through.
    pub retries: usize,
    /// Most candidates returned.
    pub max_output: usize,
    /// Top-ranked evaluated expressions examined by the output filter.
    pub scan_limit: usize,
    /// Worker threads for candidate evaluation; 0 uses all cores.
    pub workers: usize,
    pub report: ReportSettings,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            population_size: 200,
            generations: 40,
            tournament_size: 3,
            p_mutation: 0.3,
            p_crossover: 0.6,
            max_depth: 6,
            max_nodes: 24,
            fitness: Fitness::IcMean,
            min_fitness: 0.0,
            redundancy_threshold: 0.7,
            operators: Op::all().collect(),
            fields: vec!["close".into(), "volume".into()],
            group_fields: Vec::new(),
            windows: vec![2, 3, 5, 10, 20, 40],
            fractions: vec![0.01, 0.05, 0.1],
            constants: vec![0.5, 1.0, 2.0],
            p_constant: 0.1,
            validation_fraction: 0.25,
            min_coverage: 0.5,
            retries: 8,
            max_output: 20,
            scan_limit: 200,
            workers: 0,
            report: ReportSettings::default(),
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_size < 2 {
            return bad(format!("population size must be at least 2, got {}", self.population_size));
        }
        if self.tournament_size < 1 {
            return bad("tournament size must be at least 1".into());
        }
        let probs = [self.p_mutation, self.p_crossover, self.p_constant];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.p_mutation + self.p_crossover > 1.0 + 1e-12 {
            return bad("probabilities must lie in [0, 1] with p_mutation + p_crossover <= 1".into());
        }
        if self.max_depth < 1 || self.max_depth > DEFAULT_MAX_DEPTH {
            return bad(format!("max depth must lie in [1, {DEFAULT_MAX_DEPTH}], got {}", self.max_depth));
        }
        if self.max_nodes < 1 || self.max_nodes > DEFAULT_MAX_NODES {
            return bad(format!("max nodes must lie in [1, {DEFAULT_MAX_NODES}], got {}", self.max_nodes));
        }
        if !(self.redundancy_threshold > 0.0 && self.redundancy_threshold <= 1.0) {
            return bad(format!("redundancy threshold must lie in (0, 1], got {}", self.redundancy_threshold));
        }
        if self.operators.is_empty() {
            return bad("operator whitelist is empty".into());
        }
        if self.fields.is_empty() {
            return bad("field whitelist is empty".into());
        }
        if self.windows.iter().any(|w| *w < 2) {
            return bad("windows must be at least 2".into());
        }
        if self.fractions.iter().any(|p| !(0.0..0.5).contains(p)) {
            return bad("fractions must lie in [0, 0.5)".into());
        }
        if self.constants.iter().any(|c| !c.is_finite()) {
            return bad("constants must be finite".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return bad("min coverage must lie in [0, 1]".into());
        }
        if self.usable_operators().is_empty() {
            return bad("no whitelisted operator has all its parameter kinds available".into());
        }
        Ok(())
    }

    /// Whitelisted operators whose parameter kinds can all be filled.
    pub fn usable_operators(&self) -> Vec<Op> {
        self.operators
            .iter()
            .copied()
            .filter(|op| {
                op.params().iter().all(|k| match k {
                    ParamKind::Series => true,
                    ParamKind::Window => !self.windows.is_empty(),
                    ParamKind::Group => !self.group_fields.is_empty(),
                    ParamKind::Fraction => !self.fractions.is_empty(),
                })
            })
            .collect()
    }
}
