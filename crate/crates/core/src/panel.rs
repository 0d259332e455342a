//! Aligned (date x instrument x field) numeric panel plus preprocessing.
//!
//! Cells that were never observed (or were observed as `NA`) are masked false
//! and hold a NaN sentinel. Every read path goes through the mask.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::stats;

pub const CSV_HEADER: [&str; 4] = ["date", "instrument", "field", "value"];
const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone)]
pub struct PanelFrame {
    dates: Arc<[NaiveDate]>,
    instruments: Arc<[String]>,
    fields: Vec<String>,
    // field-major: f * (dates * instruments) + d * instruments + i
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for PanelFrame {
    /// Masked cells compare equal regardless of their sentinel; observed cells bitwise.
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.instruments == other.instruments
            && self.fields == other.fields
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), m)| !m || a.to_bits() == b.to_bits())
    }
}

impl PanelFrame {
    /// Build a panel from dense field-major storage, validating every axis invariant.
    pub fn new(
        dates: Vec<NaiveDate>,
        instruments: Vec<String>,
        fields: Vec<String>,
        mut values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("dates must be strictly increasing".into()));
        }
        let uniq: BTreeSet<&String> = instruments.iter().collect();
        if uniq.len() != instruments.len() {
            return Err(Error::InvalidInput("duplicate instrument".into()));
        }
        let uniq: BTreeSet<&String> = fields.iter().collect();
        if uniq.len() != fields.len() {
            return Err(Error::InvalidInput("duplicate field".into()));
        }
        let len = dates.len() * instruments.len() * fields.len();
        if values.len() != len || mask.len() != len {
            return Err(Error::InvalidInput(format!(
                "panel storage has {} values / {} mask cells, expected {len}",
                values.len(),
                mask.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            dates: dates.into(),
            instruments: instruments.into(),
            fields,
            values,
            mask,
        })
    }

    /// Build a panel by calling `cell(date, instrument, field)` for every cell.
    pub fn from_fn(
        dates: Vec<NaiveDate>,
        instruments: Vec<String>,
        fields: Vec<String>,
        mut cell: impl FnMut(usize, usize, usize) -> Option<f64>,
    ) -> Result<Self> {
        let (nd, ni, nf) = (dates.len(), instruments.len(), fields.len());
        let mut values = vec![f64::NAN; nd * ni * nf];
        let mut mask = vec![false; nd * ni * nf];
        for f in 0..nf {
            for d in 0..nd {
                for i in 0..ni {
                    let idx = f * nd * ni + d * ni + i;
                    if let Some(v) = cell(d, i, f) {
                        values[idx] = v;
                        mask[idx] = true;
                    }
                }
            }
        }
        Self::new(dates, instruments, fields, values, mask)
    }

    /// Build from long-format records; axes become the sorted union of what was seen.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NaiveDate, String, String, Option<f64>)>,
    {
        let mut cells: BTreeMap<(NaiveDate, String, String), Option<f64>> = BTreeMap::new();
        for (n, (d, i, f, v)) in records.into_iter().enumerate() {
            let key = (d, i, f);
            if cells.contains_key(&key) {
                return Err(Error::DuplicateRecord {
                    line: n as u64 + 1,
                    key: format!("{},{},{}", key.0, key.1, key.2),
                });
            }
            cells.insert(key, v);
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: BTreeMap<(NaiveDate, String, String), Option<f64>>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dates: BTreeSet<NaiveDate> = cells.keys().map(|k| k.0).collect();
        let instruments: BTreeSet<&String> = cells.keys().map(|k| &k.1).collect();
        let fields: BTreeSet<&String> = cells.keys().map(|k| &k.2).collect();
        let dates: Vec<NaiveDate> = dates.into_iter().collect();
        let instruments: Vec<String> = instruments.into_iter().cloned().collect();
        let fields: Vec<String> = fields.into_iter().cloned().collect();
        let (nd, ni) = (dates.len(), instruments.len());
        let mut values = vec![f64::NAN; nd * ni * fields.len()];
        let mut mask = vec![false; values.len()];
        for ((d, i, f), v) in &cells {
            if let Some(v) = v {
                let di = dates.binary_search(d).expect("date axis");
                let ii = instruments.binary_search(i).expect("instrument axis");
                let fi = fields.binary_search(f).expect("field axis");
                let idx = fi * nd * ni + di * ni + ii;
                values[idx] = *v;
                mask[idx] = true;
            }
        }
        Self::new(dates, instruments, fields, values, mask)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn dates_arc(&self) -> Arc<[NaiveDate]> {
        Arc::clone(&self.dates)
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn instruments_arc(&self) -> Arc<[String]> {
        Arc::clone(&self.instruments)
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.dates.len(), self.instruments.len(), self.fields.len())
    }

    pub fn field_index(&self, name: &str) -> Result<usize> {
        self.fields
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::FieldNotFound(name.to_string()))
    }

    pub fn has_field(&self, name: &str) -> bool {
        self.fields.iter().any(|f| f == name)
    }

    fn plane(&self) -> usize {
        self.dates.len() * self.instruments.len()
    }

    pub fn get(&self, date: usize, instrument: usize, field: usize) -> Option<f64> {
        let idx = field * self.plane() + date * self.instruments.len() + instrument;
        self.mask[idx].then(|| self.values[idx])
    }

    pub fn is_observed(&self, date: usize, instrument: usize, field: usize) -> bool {
        self.mask[field * self.plane() + date * self.instruments.len() + instrument]
    }

    /// Date-major (values, mask) slices of one field.
    pub fn surface(&self, field: usize) -> (&[f64], &[bool]) {
        let p = self.plane();
        (
            &self.values[field * p..(field + 1) * p],
            &self.mask[field * p..(field + 1) * p],
        )
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        1.0 - self.observed_count() as f64 / self.mask.len() as f64
    }

    /// Add a field, or replace it when the name exists. Surfaces are date-major.
    pub fn with_field(&self, name: &str, values: &[f64], mask: &[bool]) -> Result<Self> {
        let p = self.plane();
        if values.len() != p || mask.len() != p {
            return Err(Error::AxisMismatch(format!(
                "field `{name}` has {} cells, panel plane has {p}",
                values.len()
            )));
        }
        let mut out = self.clone();
        let f = match self.fields.iter().position(|f| f == name) {
            Some(f) => f,
            None => {
                out.fields.push(name.to_string());
                out.values.extend(std::iter::repeat_n(f64::NAN, p));
                out.mask.extend(std::iter::repeat_n(false, p));
                out.fields.len() - 1
            }
        };
        for k in 0..p {
            out.mask[f * p + k] = mask[k];
            out.values[f * p + k] = if mask[k] { values[k] } else { f64::NAN };
        }
        Ok(out)
    }

    /// Keep only the first `n_dates` dates.
    pub fn truncate(&self, n_dates: usize) -> Self {
        self.select_dates(0..n_dates.min(self.n_dates()))
    }

    pub fn select_dates(&self, range: std::ops::Range<usize>) -> Self {
        let (nd, ni, nf) = self.shape();
        let keep = range.len();
        let mut values = Vec::with_capacity(keep * ni * nf);
        let mut mask = Vec::with_capacity(keep * ni * nf);
        for f in 0..nf {
            let base = f * nd * ni;
            values.extend_from_slice(&self.values[base + range.start * ni..base + range.end * ni]);
            mask.extend_from_slice(&self.mask[base + range.start * ni..base + range.end * ni]);
        }
        Self {
            dates: self.dates[range].into(),
            instruments: Arc::clone(&self.instruments),
            fields: self.fields.clone(),
            values,
            mask,
        }
    }

    fn map_field_dates(
        &self,
        field: usize,
        mut per_date: impl FnMut(&mut [f64], &mut [bool]),
    ) -> Self {
        let mut out = self.clone();
        let ni = self.n_instruments();
        let p = self.plane();
        for d in 0..self.n_dates() {
            let lo = field * p + d * ni;
            per_date(&mut out.values[lo..lo + ni], &mut out.mask[lo..lo + ni]);
            for k in lo..lo + ni {
                if !out.mask[k] {
                    out.values[k] = f64::NAN;
                }
            }
        }
        out
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).ok()
}

/// Load a long-format `date,instrument,field,value` CSV file.
pub fn load_panel(path: impl AsRef<Path>) -> Result<PanelFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file)
}

pub fn read_panel(reader: impl Read) -> Result<PanelFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptyInput),
        Some(r) => r.map_err(csv_error)?,
    };
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut cells: BTreeMap<(NaiveDate, String, String), Option<f64>> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse { line, message };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", rec.len())));
        }
        let date = parse_date(&rec[0]).ok_or_else(|| bad(format!("bad date `{}`", &rec[0])))?;
        if rec[1].is_empty() || rec[2].is_empty() {
            return Err(bad("empty instrument or field".into()));
        }
        let value = match &rec[3] {
            "NA" => None,
            s => {
                let v: f64 = s.parse().map_err(|_| bad(format!("bad value `{s}`")))?;
                if !v.is_finite() {
                    return Err(bad(format!("non-finite value `{s}`")));
                }
                Some(v)
            }
        };
        let key = (date, rec[1].to_string(), rec[2].to_string());
        if cells.contains_key(&key) {
            return Err(Error::DuplicateRecord {
                line,
                key: format!("{},{},{}", key.0, key.1, key.2),
            });
        }
        cells.insert(key, value);
    }
    PanelFrame::from_cells(cells)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Write the panel in long format. Masked cells are written as `NA` when
/// `emit_na` is set and omitted otherwise.
pub fn write_panel(panel: &PanelFrame, mut out: impl Write, emit_na: bool) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    let (nd, ni, nf) = panel.shape();
    for d in 0..nd {
        let date = panel.dates[d].format(DATE_FORMAT);
        for i in 0..ni {
            for f in 0..nf {
                match panel.get(d, i, f) {
                    Some(v) => writeln!(out, "{date},{},{},{v}", panel.instruments[i], panel.fields[f])?,
                    None if emit_na => {
                        writeln!(out, "{date},{},{},NA", panel.instruments[i], panel.fields[f])?
                    }
                    None => {}
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Impute {
    None,
    ForwardFill { max_gap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Standardize {
    None,
    ZscoreCrossSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSpec {
    pub impute: Impute,
    pub winsorize_p: f64,
    pub standardize: Standardize,
    /// Fields that winsorize/standardize touch; `None` means every field.
    pub fields: Option<Vec<String>>,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            impute: Impute::None,
            winsorize_p: 0.0,
            standardize: Standardize::None,
            fields: None,
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.winsorize_p) {
            return Err(Error::Config(format!(
                "winsorize_p must lie in [0, 0.5), got {}",
                self.winsorize_p
            )));
        }
        Ok(())
    }
}

/// Impute, then winsorize, then standardize.
pub fn preprocess(panel: &PanelFrame, spec: &PreprocessSpec) -> Result<PanelFrame> {
    spec.validate()?;
    let mut out = match spec.impute {
        Impute::None => panel.clone(),
        Impute::ForwardFill { max_gap } => forward_fill(panel, max_gap),
    };
    let targets: Vec<String> = match &spec.fields {
        Some(f) => f.clone(),
        None => panel.fields().to_vec(),
    };
    for field in &targets {
        if spec.winsorize_p > 0.0 {
            out = winsorize_cross_section(&out, field, spec.winsorize_p)?;
        }
        if spec.standardize == Standardize::ZscoreCrossSection {
            out = zscore_cross_section(&out, field)?;
        }
    }
    Ok(out)
}

/// Carry the latest observed input value forward by at most `max_gap` dates.
///
/// Only originally observed cells act as sources, so fills never chain.
pub fn forward_fill(panel: &PanelFrame, max_gap: usize) -> PanelFrame {
    let mut out = panel.clone();
    let (nd, ni, nf) = panel.shape();
    let p = nd * ni;
    for f in 0..nf {
        for i in 0..ni {
            let mut last: Option<(usize, f64)> = None;
            for d in 0..nd {
                let idx = f * p + d * ni + i;
                if panel.mask[idx] {
                    last = Some((d, panel.values[idx]));
                } else if let Some((src, v)) = last {
                    if d - src <= max_gap {
                        out.values[idx] = v;
                        out.mask[idx] = true;
                    }
                }
            }
        }
    }
    out
}

/// Per date, clip the observed cross-section of `field` to the nearest-rank
/// quantiles `[Q(p), Q(1 - p)]`.
pub fn winsorize_cross_section(panel: &PanelFrame, field: &str, p: f64) -> Result<PanelFrame> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::InvalidInput(format!("winsorize p must lie in [0, 0.5), got {p}")));
    }
    let f = panel.field_index(field)?;
    if p == 0.0 {
        return Ok(panel.clone());
    }
    Ok(panel.map_field_dates(f, |values, mask| {
        let mut observed: Vec<f64> = values
            .iter()
            .zip(mask.iter())
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect();
        if observed.is_empty() {
            return;
        }
        observed.sort_by(f64::total_cmp);
        let lo = stats::nearest_rank(&observed, p);
        let hi = stats::nearest_rank(&observed, 1.0 - p);
        for (v, m) in values.iter_mut().zip(mask.iter()) {
            if *m {
                *v = v.clamp(lo, hi);
            }
        }
    }))
}

/// Per date, replace observed values by their cross-sectional z-score
/// (sample std). Dates with fewer than two observations or zero spread are
/// masked out entirely.
pub fn zscore_cross_section(panel: &PanelFrame, field: &str) -> Result<PanelFrame> {
    let f = panel.field_index(field)?;
    Ok(panel.map_field_dates(f, zscore_in_place))
}

pub(crate) fn zscore_in_place(values: &mut [f64], mask: &mut [bool]) {
    let observed: Vec<f64> = values
        .iter()
        .zip(mask.iter())
        .filter(|(_, m)| **m)
        .map(|(v, _)| *v)
        .collect();
    let std = stats::sample_std(&observed);
    if observed.len() < 2 || stats::is_degenerate(&observed, std) {
        mask.iter_mut().for_each(|m| *m = false);
        return;
    }
    let mean = stats::mean(&observed);
    for (v, m) in values.iter_mut().zip(mask.iter()) {
        if *m {
            *v = (*v - mean) / std;
        }
    }
}
