//! Persistent store of accepted factors.
//!
//! Records are content addressed: the id is a hash of the canonical
//! expression text. An expression may name an earlier record as if it were a
//! field; that reference becomes a dependency edge, and scheduled evaluation
//! computes prerequisites first and exposes them under their record names.
//!
//! On disk a base is UTF-8 JSON lines, one record per line, fields in the
//! order id, name, expr, created_at, metrics, depends_on, status.

mod graph;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsl::{evaluate, parse, Expr, FactorMatrix};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::metrics::FactorReport;
use crate::panel::PanelFrame;

pub use graph::DependencyGraph;

/// Hex characters kept from the SHA-256 digest (128 bits).
pub const ID_HEX_LEN: usize = 32;

pub fn factor_id(canonical_text: &str) -> String {
    let digest = Sha256::digest(canonical_text.as_bytes());
    let mut h = hex::encode(digest);
    h.truncate(ID_HEX_LEN);
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Active,
    Retired,
}

/// Scalar statistics of a [`FactorReport`]; undefined values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub ic_mean: Option<f64>,
    pub ic_std: Option<f64>,
    pub icir: Option<f64>,
    pub annualized_return: Option<f64>,
    pub sharpe: Option<f64>,
    pub max_drawdown: Option<f64>,
    pub avg_turnover: Option<f64>,
    pub max_abs_corr_to_base: Option<f64>,
    pub n_dates_evaluated: usize,
}

impl From<&FactorReport> for RecordMetrics {
    fn from(r: &FactorReport) -> Self {
        let f = |v: f64| v.is_finite().then_some(v);
        Self {
            ic_mean: f(r.ic_mean),
            ic_std: f(r.ic_std),
            icir: f(r.icir),
            annualized_return: f(r.annualized_return),
            sharpe: f(r.sharpe),
            max_drawdown: f(r.max_drawdown),
            avg_turnover: f(r.avg_turnover),
            max_abs_corr_to_base: f(r.max_abs_corr_to_base),
            n_dates_evaluated: r.n_dates_evaluated,
        }
    }
}

/// A dependency: a meta field or another record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Dependency {
    Field(String),
    Factor(String),
}

impl fmt::Display for Dependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dependency::Field(n) => write!(f, "field:{n}"),
            Dependency::Factor(id) => write!(f, "factor:{id}"),
        }
    }
}

impl std::str::FromStr for Dependency {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            Some(("field", n)) if !n.is_empty() => Ok(Dependency::Field(n.to_string())),
            Some(("factor", id)) if !id.is_empty() => Ok(Dependency::Factor(id.to_string())),
            _ => Err(format!("bad dependency `{s}`")),
        }
    }
}

impl Serialize for Dependency {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Dependency {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorRecord {
    pub id: String,
    pub name: String,
    /// Canonical expression text.
    pub expr: String,
    /// RFC 3339 timestamp supplied by the caller.
    pub created_at: String,
    pub metrics: Option<RecordMetrics>,
    pub depends_on: BTreeSet<Dependency>,
    pub status: Status,
}

impl FactorRecord {
    pub fn parsed_expr(&self) -> Result<Expr> {
        Ok(parse(&self.expr)?)
    }

    fn factor_deps(&self) -> impl Iterator<Item = &str> {
        self.depends_on.iter().filter_map(|d| match d {
            Dependency::Factor(id) => Some(id.as_str()),
            Dependency::Field(_) => None,
        })
    }
}

/// A factor to be committed.
#[derive(Debug, Clone)]
pub struct NewFactor {
    pub name: String,
    pub expr: Expr,
    pub created_at: String,
    pub metrics: Option<RecordMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactorBase {
    records: Vec<FactorRecord>,
    by_id: BTreeMap<String, usize>,
    by_name: BTreeMap<String, usize>,
}

impl FactorBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[FactorRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&FactorRecord> {
        self.by_id.get(id).map(|&k| &self.records[k])
    }

    pub fn by_name(&self, name: &str) -> Option<&FactorRecord> {
        self.by_name.get(name).map(|&k| &self.records[k])
    }

    pub fn active(&self) -> impl Iterator<Item = &FactorRecord> {
        self.records.iter().filter(|r| r.status == Status::Active)
    }

    /// Append a record. Every field the expression reads must be one of
    /// `meta_fields` or the name of an existing record.
    pub fn commit(&mut self, f: NewFactor, meta_fields: &BTreeSet<String>) -> Result<String> {
        if !f.expr.is_well_formed() {
            return Err(Error::InvalidInput(format!("malformed expression {}", f.expr)));
        }
        if !crate::dsl::is_identifier(&f.name) {
            return Err(Error::InvalidInput(format!("bad factor name `{}`", f.name)));
        }
        chrono::DateTime::parse_from_rfc3339(&f.created_at)
            .map_err(|e| Error::InvalidInput(format!("bad timestamp `{}`: {e}", f.created_at)))?;
        let text = f.expr.canonical();
        let id = factor_id(&text);
        if self.by_id.contains_key(&id) {
            return Err(Error::DuplicateFactor(id));
        }
        if meta_fields.contains(&f.name) {
            return Err(Error::InvalidInput(format!("factor name `{}` shadows a field", f.name)));
        }
        if self.by_name.contains_key(&f.name) {
            return Err(Error::DuplicateFactor(f.name));
        }
        let mut depends_on = BTreeSet::new();
        for name in f.expr.required_fields() {
            if name == f.name {
                return Err(Error::Cycle(vec![id.clone(), id]));
            }
            if meta_fields.contains(&name) {
                depends_on.insert(Dependency::Field(name));
            } else if let Some(r) = self.by_name(&name) {
                depends_on.insert(Dependency::Factor(r.id.clone()));
            } else {
                return Err(Error::UnresolvedDependency(name));
            }
        }
        let record = FactorRecord {
            id: id.clone(),
            name: f.name,
            expr: text,
            created_at: f.created_at,
            metrics: f.metrics,
            depends_on,
            status: Status::Active,
        };
        // prerequisites already exist, so a new node cannot close a cycle;
        // the check guards against that reasoning going stale
        let mut g = self.graph();
        g.add_node(&record.id);
        for p in record.factor_deps() {
            g.add_edge(p, &record.id);
        }
        g.schedule_all()?;
        self.insert(record);
        Ok(id)
    }

    fn insert(&mut self, record: FactorRecord) {
        let k = self.records.len();
        self.by_id.insert(record.id.clone(), k);
        self.by_name.insert(record.name.clone(), k);
        self.records.push(record);
    }

    /// Mark a record retired. Dependents keep resolving it.
    pub fn retire(&mut self, id: &str) -> Result<()> {
        let k = *self
            .by_id
            .get(id)
            .ok_or_else(|| Error::UnresolvedDependency(id.to_string()))?;
        self.records[k].status = Status::Retired;
        Ok(())
    }

    pub fn graph(&self) -> DependencyGraph {
        let mut g = DependencyGraph::new();
        for r in &self.records {
            g.add_node(&r.id);
            for p in r.factor_deps() {
                g.add_edge(p, &r.id);
            }
        }
        g
    }

    /// Record ids to evaluate so that every target's prerequisites come first.
    pub fn schedule(&self, targets: &BTreeSet<String>) -> Result<Vec<String>> {
        self.graph().schedule(targets)
    }

    /// Evaluate targets in schedule order. Each computed record is exposed to
    /// its dependents as a panel field named after the record.
    pub fn evaluate_scheduled(
        &self,
        targets: &BTreeSet<String>,
        panel: &PanelFrame,
    ) -> Result<Vec<(String, FactorMatrix)>> {
        let g = self.graph();
        let order = g.schedule(targets)?;
        let has_dependents: BTreeSet<&str> = g.edges().map(|(p, _)| p).collect();
        let mut work = panel.clone();
        let mut out = Vec::with_capacity(order.len());
        for id in order {
            let r = self.get(&id).expect("scheduled ids exist");
            let m = evaluate(&r.parsed_expr()?, &work)?;
            if has_dependents.contains(id.as_str()) {
                work = work.with_field(&r.name, m.values(), m.mask())?;
            }
            out.push((id, m));
        }
        Ok(out)
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse and validate a base. Line numbers in errors are 1-based.
    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut base = FactorBase::new();
        let mut lines = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let n = k as u64 + 1;
            let line = line.map_err(|e| Error::Integrity {
                line: n,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Integrity { line: n, message };
            let r: FactorRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let expr = r.parsed_expr().map_err(|e| bad(e.to_string()))?;
            if expr.canonical() != r.expr {
                return Err(bad(format!("expression `{}` is not canonical", r.expr)));
            }
            if factor_id(&r.expr) != r.id {
                return Err(bad(format!("id {} does not match the expression hash", r.id)));
            }
            chrono::DateTime::parse_from_rfc3339(&r.created_at).map_err(|e| bad(e.to_string()))?;
            if base.by_id.contains_key(&r.id) {
                return Err(bad(format!("duplicate id {}", r.id)));
            }
            if base.by_name.contains_key(&r.name) {
                return Err(bad(format!("duplicate name {}", r.name)));
            }
            lines.push(n);
            base.insert(r);
        }
        // dependencies may point forward in the file, so resolve after reading
        for (r, &n) in base.records.iter().zip(&lines) {
            let bad = |message: String| Error::Integrity { line: n, message };
            let mut expected = BTreeSet::new();
            for p in r.factor_deps() {
                let dep = base.get(p).ok_or_else(|| bad(format!("unresolved dependency {p}")))?;
                expected.insert(dep.name.clone());
            }
            for d in &r.depends_on {
                if let Dependency::Field(f) = d {
                    expected.insert(f.clone());
                }
            }
            let used = r.parsed_expr()?.required_fields();
            if used != expected || expected.len() != r.depends_on.len() {
                return Err(bad("depends_on does not match the fields the expression reads".into()));
            }
        }
        base.graph().schedule_all()?;
        Ok(base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(file))
    }

    /// Write the whole base atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        fsutil::write_atomic(path.as_ref(), &buf)
    }
}
