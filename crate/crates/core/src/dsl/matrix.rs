use std::ops::Range;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Evaluated factor surface, date-major (`d * instruments + i`).
///
/// Masked-false cells hold NaN and are never compared or correlated.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    dates: Arc<[NaiveDate]>,
    instruments: Arc<[String]>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl PartialEq for FactorMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dates == other.dates
            && self.instruments == other.instruments
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), m)| !m || a.to_bits() == b.to_bits())
    }
}

impl FactorMatrix {
    /// Cells that are non-finite are masked out.
    pub fn new(
        dates: Arc<[NaiveDate]>,
        instruments: Arc<[String]>,
        mut values: Vec<f64>,
        mut mask: Vec<bool>,
    ) -> Result<Self> {
        let n = dates.len() * instruments.len();
        if values.len() != n || mask.len() != n {
            return Err(Error::AxisMismatch(format!(
                "matrix storage has {} cells, expected {n}",
                values.len()
            )));
        }
        for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
            if !v.is_finite() {
                *m = false;
            }
            if !*m {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            dates,
            instruments,
            values,
            mask,
        })
    }

    pub fn from_fn(
        dates: Arc<[NaiveDate]>,
        instruments: Arc<[String]>,
        mut cell: impl FnMut(usize, usize) -> Option<f64>,
    ) -> Self {
        let ni = instruments.len();
        let n = dates.len() * ni;
        let mut values = vec![f64::NAN; n];
        let mut mask = vec![false; n];
        for d in 0..dates.len() {
            for i in 0..ni {
                if let Some(v) = cell(d, i) {
                    values[d * ni + i] = v;
                    mask[d * ni + i] = true;
                }
            }
        }
        Self::new(dates, instruments, values, mask).expect("shape is consistent by construction")
    }

    pub fn masked(dates: Arc<[NaiveDate]>, instruments: Arc<[String]>) -> Self {
        let n = dates.len() * instruments.len();
        Self {
            dates,
            instruments,
            values: vec![f64::NAN; n],
            mask: vec![false; n],
        }
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

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_instruments(&self) -> usize {
        self.instruments.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, date: usize, instrument: usize) -> Option<f64> {
        let k = date * self.instruments.len() + instrument;
        self.mask[k].then(|| self.values[k])
    }

    pub fn row(&self, date: usize) -> (&[f64], &[bool]) {
        let ni = self.instruments.len();
        (
            &self.values[date * ni..(date + 1) * ni],
            &self.mask[date * ni..(date + 1) * ni],
        )
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn same_axes(&self, other: &FactorMatrix) -> bool {
        (Arc::ptr_eq(&self.dates, &other.dates) || self.dates == other.dates)
            && (Arc::ptr_eq(&self.instruments, &other.instruments)
                || self.instruments == other.instruments)
    }

    pub fn check_aligned(&self, other: &FactorMatrix) -> Result<()> {
        if self.same_axes(other) {
            Ok(())
        } else {
            Err(Error::AxisMismatch(format!(
                "surfaces differ: {}x{} vs {}x{}",
                self.n_dates(),
                self.n_instruments(),
                other.n_dates(),
                other.n_instruments()
            )))
        }
    }

    pub fn slice_dates(&self, range: Range<usize>) -> FactorMatrix {
        let ni = self.instruments.len();
        FactorMatrix {
            dates: self.dates[range.clone()].into(),
            instruments: Arc::clone(&self.instruments),
            values: self.values[range.start * ni..range.end * ni].to_vec(),
            mask: self.mask[range.start * ni..range.end * ni].to_vec(),
        }
    }

    /// Mask every cell on dates inside `range`.
    pub fn mask_dates(&mut self, range: Range<usize>) {
        let ni = self.instruments.len();
        for k in range.start * ni..range.end * ni {
            self.mask[k] = false;
            self.values[k] = f64::NAN;
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> FactorMatrix {
        let values = self.values.iter().map(|&v| f(v)).collect();
        FactorMatrix::new(
            Arc::clone(&self.dates),
            Arc::clone(&self.instruments),
            values,
            self.mask.clone(),
        )
        .expect("same shape")
    }
}
