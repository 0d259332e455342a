use std::io::Write;
use std::sync::Arc;

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Per-rebalance-date weight vectors over a fixed instrument axis.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeries {
    instruments: Arc<[String]>,
    dates: Vec<NaiveDate>,
    weights: Vec<Vec<f64>>,
}

impl WeightSeries {
    pub fn new(instruments: Arc<[String]>) -> Self {
        Self {
            instruments,
            dates: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push(&mut self, date: NaiveDate, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.instruments.len() {
            return Err(Error::AxisMismatch(format!(
                "weight vector has {} entries, expected {}",
                weights.len(),
                self.instruments.len()
            )));
        }
        if self.dates.last().is_some_and(|last| *last >= date) {
            return Err(Error::InvalidInput("weight dates must increase".into()));
        }
        self.dates.push(date);
        self.weights.push(weights);
        Ok(())
    }

    pub fn instruments(&self) -> &[String] {
        &self.instruments
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn at(&self, date: NaiveDate) -> Option<&[f64]> {
        self.dates
            .binary_search(&date)
            .ok()
            .map(|k| self.weights[k].as_slice())
    }

    /// `date,instrument,weight` rows; zero weights are omitted.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "date,instrument,weight")?;
        for (date, w) in self.dates.iter().zip(&self.weights) {
            for (name, v) in self.instruments.iter().zip(w) {
                if *v != 0.0 {
                    writeln!(out, "{},{name},{v}", date.format("%Y-%m-%d"))?;
                }
            }
        }
        Ok(())
    }
}
