use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SliceSchedule {
    /// Equal shares over this many slices.
    Twap(usize),
    /// Shares proportional to a non-negative volume profile.
    Vwap(Vec<f64>),
}

/// Split a parent order into integer child quantities that sum exactly to
/// `total`. Fractional shares are rounded by largest remainder; equal
/// remainders favour the earlier slice.
pub fn split_order(total: u64, schedule: &SliceSchedule) -> Result<Vec<u64>> {
    match schedule {
        SliceSchedule::Twap(0) => Err(Error::InvalidInput("TWAP needs at least one slice".into())),
        SliceSchedule::Twap(slices) => {
            let k = *slices as u64;
            let (base, extra) = (total / k, total % k);
            Ok((0..k).map(|j| base + u64::from(j < extra)).collect())
        }
        SliceSchedule::Vwap(profile) => {
            if profile.is_empty() {
                return Err(Error::InvalidInput("VWAP profile is empty".into()));
            }
            if profile.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInput("VWAP profile must be finite and non-negative".into()));
            }
            let sum: f64 = profile.iter().sum();
            if sum <= 0.0 {
                return Err(Error::InvalidInput("VWAP profile is all zero".into()));
            }
            let exact: Vec<f64> = profile.iter().map(|v| total as f64 * v / sum).collect();
            let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
            let mut assigned: u64 = out.iter().sum();
            // rounding can overshoot when total is beyond f64 integer precision
            let mut j = 0;
            while assigned > total {
                if out[j] > 0 {
                    out[j] -= 1;
                    assigned -= 1;
                }
                j = (j + 1) % out.len();
            }
            let mut order: Vec<usize> = (0..exact.len()).filter(|&j| profile[j] > 0.0).collect();
            let frac = |j: usize| exact[j] - exact[j].floor();
            order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
            let mut left = total - assigned;
            let mut k = 0;
            while left > 0 {
                out[order[k % order.len()]] += 1;
                left -= 1;
                k += 1;
            }
            Ok(out)
        }
    }
}
