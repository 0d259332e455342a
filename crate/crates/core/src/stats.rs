//! Small numeric helpers shared across modules.

/// Average 0-based positions in ascending order; ties share the mean position.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end - 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Map 0-based average ranks onto [-1, +1]; a single value maps to 0.
pub fn unit_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    let denom = (n - 1) as f64;
    average_ranks(values)
        .into_iter()
        .map(|r| 2.0 * r / denom - 1.0)
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator), two-pass.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// True when the spread of `values` is indistinguishable from rounding noise.
pub fn is_degenerate(values: &[f64], std: f64) -> bool {
    if !std.is_finite() || std == 0.0 {
        return true;
    }
    let scale = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    std <= scale * 1e-13
}

/// Pearson correlation; `None` when either side has no variance or n < 2.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let scale_x = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let scale_y = y.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let tiny = |ss: f64, scale: f64| ss <= (scale * 1e-13).powi(2) * n as f64;
    if sxx == 0.0 || syy == 0.0 || tiny(sxx, scale_x) || tiny(syy, scale_y) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Nearest-rank quantile: the ceil(p * n)-th order statistic (1-based, at least 1).
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}
