use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::metrics::{information_coefficient, mean_ic, ForwardReturns, IcMethod};
use crate::rng;
use crate::stats;

use super::CombinerModel;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorImportance {
    pub factor_id: String,
    pub mean_drop: f64,
    pub std_drop: f64,
    /// Drop in mean IC for each repetition.
    pub drops: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub baseline_ic: f64,
    pub factors: Vec<FactorImportance>,
    pub repetitions: usize,
    pub seed: u64,
}

impl ImportanceReport {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "factor_id,mean_drop,std_drop")?;
        for f in &self.factors {
            writeln!(out, "{},{},{}", crate::metrics::csv_escape(&f.factor_id), f.mean_drop, f.std_drop)?;
        }
        Ok(())
    }
}

/// Shuffle the observed values of one surface within each date.
fn shuffle_within_dates(f: &FactorMatrix, rng: &mut rng::StreamRng) -> Result<FactorMatrix> {
    let ni = f.n_instruments();
    let mut values = f.values().to_vec();
    for d in 0..f.n_dates() {
        let (_, m) = f.row(d);
        let slots: Vec<usize> = (0..ni).filter(|&i| m[i]).map(|i| d * ni + i).collect();
        let mut vals: Vec<f64> = slots.iter().map(|&k| values[k]).collect();
        vals.shuffle(rng);
        for (k, v) in slots.into_iter().zip(vals) {
            values[k] = v;
        }
    }
    FactorMatrix::new(f.dates_arc(), f.instruments_arc(), values, f.mask().to_vec())
}

/// Drop in mean spearman IC of the model's predictions when one factor is
/// shuffled within each date, repeated `repetitions` times per factor.
///
/// Repetition `k` of factor `j` draws from its own stream, so the report does
/// not depend on scheduling.
pub fn permutation_importance(
    model: &CombinerModel,
    factors: &[FactorMatrix],
    fwd: &ForwardReturns,
    repetitions: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if repetitions == 0 {
        return Err(Error::InvalidInput("importance needs at least one repetition".into()));
    }
    let score = |fs: &[FactorMatrix]| -> Result<f64> {
        let pred = model.predict(fs)?;
        Ok(mean_ic(&information_coefficient(&pred, fwd, IcMethod::Spearman)?))
    };
    let baseline = score(factors)?;
    let jobs: Vec<(usize, usize)> = (0..factors.len())
        .flat_map(|j| (0..repetitions).map(move |k| (j, k)))
        .collect();
    let drops: Vec<f64> = jobs
        .par_iter()
        .map(|&(j, k)| {
            let mut r = rng::stream(seed, "combiner/importance", &[j as u64, k as u64]);
            let mut shuffled = factors.to_vec();
            shuffled[j] = shuffle_within_dates(&factors[j], &mut r)?;
            Ok(baseline - score(&shuffled)?)
        })
        .collect::<Result<_>>()?;
    let factors_out = (0..factors.len())
        .map(|j| {
            let d = drops[j * repetitions..(j + 1) * repetitions].to_vec();
            FactorImportance {
                factor_id: model.factor_ids[j].clone(),
                mean_drop: stats::mean(&d),
                std_drop: if d.len() < 2 { 0.0 } else { stats::sample_std(&d) },
                drops: d,
            }
        })
        .collect();
    Ok(ImportanceReport {
        baseline_ic: baseline,
        factors: factors_out,
        repetitions,
        seed,
    })
}
