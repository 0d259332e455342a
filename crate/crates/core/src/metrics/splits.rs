use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitWindow {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

/// Time-ordered train/validation/test windows sliding forward by `step`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub windows: Vec<SplitWindow>,
    pub step: usize,
}

pub fn forward_splits(
    n_dates: usize,
    train: usize,
    valid: usize,
    test: usize,
    step: usize,
) -> Result<SplitPlan> {
    if train == 0 || valid == 0 || test == 0 || step == 0 {
        return Err(Error::Config("split sizes and step must all be at least 1".into()));
    }
    let span = train + valid + test;
    if span > n_dates {
        return Err(Error::Config(format!(
            "train+valid+test = {span} exceeds {n_dates} dates"
        )));
    }
    let windows = (0..)
        .map(|k| k * step)
        .take_while(|s| s + span <= n_dates)
        .map(|s| SplitWindow {
            train: s..s + train,
            valid: s + train..s + train + valid,
            test: s + train + valid..s + span,
        })
        .collect();
    Ok(SplitPlan { windows, step })
}
