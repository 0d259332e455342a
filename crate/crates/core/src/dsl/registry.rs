use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Neg,
    Abs,
    Sign,
    SafeSqrt,
    SafeLog,
    Add,
    Sub,
    Mul,
    SafeDiv,
    TsMean,
    TsStd,
    TsDelta,
    TsRank,
    TsMax,
    TsMin,
    TsCorr,
    DecayLinear,
    Rank,
    Zscore,
    GroupRank,
    GroupDemean,
    Winsorize,
    Neutralize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Elementwise,
    Timeseries,
    CrossSectional,
    Group,
    Postprocess,
}

/// Kind of one argument slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    /// A sub-expression evaluated to a surface.
    Series,
    /// Integer look-back window, at least 2.
    Window,
    /// Name of a field whose values label groups.
    Group,
    /// Fraction in [0, 0.5).
    Fraction,
}

#[derive(Debug, Clone)]
pub struct OpSpec {
    pub op: Op,
    pub name: &'static str,
    pub category: Category,
    pub params: &'static [ParamKind],
}

impl OpSpec {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Number of sub-expression arguments.
    pub fn series_arity(&self) -> usize {
        self.params.iter().filter(|p| **p == ParamKind::Series).count()
    }
}

use Category::{CrossSectional, Elementwise, Postprocess, Timeseries};
use ParamKind::{Fraction, Series, Window};

const SPECS: &[OpSpec] = &[
    OpSpec { op: Op::Neg, name: "neg", category: Elementwise, params: &[Series] },
    OpSpec { op: Op::Abs, name: "abs", category: Elementwise, params: &[Series] },
    OpSpec { op: Op::Sign, name: "sign", category: Elementwise, params: &[Series] },
    OpSpec { op: Op::SafeSqrt, name: "safe_sqrt", category: Elementwise, params: &[Series] },
    OpSpec { op: Op::SafeLog, name: "safe_log", category: Elementwise, params: &[Series] },
    OpSpec { op: Op::Add, name: "add", category: Elementwise, params: &[Series, Series] },
    OpSpec { op: Op::Sub, name: "sub", category: Elementwise, params: &[Series, Series] },
    OpSpec { op: Op::Mul, name: "mul", category: Elementwise, params: &[Series, Series] },
    OpSpec { op: Op::SafeDiv, name: "safe_div", category: Elementwise, params: &[Series, Series] },
    OpSpec { op: Op::TsMean, name: "ts_mean", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsStd, name: "ts_std", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsDelta, name: "ts_delta", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsRank, name: "ts_rank", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsMax, name: "ts_max", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsMin, name: "ts_min", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::TsCorr, name: "ts_corr", category: Timeseries, params: &[Series, Series, Window] },
    OpSpec { op: Op::DecayLinear, name: "decay_linear", category: Timeseries, params: &[Series, Window] },
    OpSpec { op: Op::Rank, name: "rank", category: CrossSectional, params: &[Series] },
    OpSpec { op: Op::Zscore, name: "zscore", category: CrossSectional, params: &[Series] },
    OpSpec { op: Op::GroupRank, name: "group_rank", category: Category::Group, params: &[Series, ParamKind::Group] },
    OpSpec { op: Op::GroupDemean, name: "group_demean", category: Category::Group, params: &[Series, ParamKind::Group] },
    OpSpec { op: Op::Winsorize, name: "winsorize", category: Postprocess, params: &[Series, Fraction] },
    OpSpec { op: Op::Neutralize, name: "neutralize", category: Postprocess, params: &[Series, ParamKind::Group] },
];

/// Name-indexed operator table; built once and read-only afterwards.
#[derive(Debug)]
pub struct OperatorRegistry {
    entries: BTreeMap<&'static str, &'static OpSpec>,
}

static REGISTRY: LazyLock<OperatorRegistry> = LazyLock::new(|| {
    let mut entries = BTreeMap::new();
    for spec in SPECS {
        let prev = entries.insert(spec.name, spec);
        assert!(prev.is_none(), "duplicate operator {}", spec.name);
    }
    OperatorRegistry { entries }
});

impl OperatorRegistry {
    pub fn global() -> &'static OperatorRegistry {
        &REGISTRY
    }

    pub fn lookup(&self, name: &str) -> Option<&'static OpSpec> {
        self.entries.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &'static OpSpec> + '_ {
        self.entries.values().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Op {
    pub fn spec(self) -> &'static OpSpec {
        SPECS.iter().find(|s| s.op == self).expect("every op is registered")
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }

    pub fn params(self) -> &'static [ParamKind] {
        self.spec().params
    }

    pub fn category(self) -> Category {
        self.spec().category
    }

    pub fn from_name(name: &str) -> Option<Op> {
        OperatorRegistry::global().lookup(name).map(|s| s.op)
    }

    pub fn all() -> impl Iterator<Item = Op> {
        SPECS.iter().map(|s| s.op)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
