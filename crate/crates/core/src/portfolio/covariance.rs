use nalgebra::{DMatrix, SymmetricEigen};

use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};

/// Shrunk covariance of instrument returns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    matrix: DMatrix<f64>,
    lookback: usize,
    shrinkage: f64,
}

impl CovEstimate {
    /// Wrap a known covariance matrix; it must be square, finite and symmetric.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInput("covariance matrix must be square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance matrix has non-finite entries".into()));
        }
        let scale = matrix.amax().max(1.0);
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            matrix,
            lookback: 0,
            shrinkage: 0.0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn shrinkage(&self) -> f64 {
        self.shrinkage
    }

    /// `wᵀ Σ w`.
    pub fn quad_form(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        let m = &self.matrix;
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += m[(i, j)] * w[j];
            }
            acc += w[i] * row;
        }
        acc
    }
}

/// Pairwise-complete sample covariance of a dates × instruments return window,
/// shrunk toward `trace(S) / n · I` with weight `delta`.
///
/// Each pair uses its own jointly observed dates and per-pair means; pairs
/// with fewer than two joint observations get zero covariance. When the
/// pairwise matrix is not positive semidefinite its negative eigenvalues are
/// clipped to zero before shrinkage.
pub fn estimate_covariance(window: &FactorMatrix, delta: f64) -> Result<CovEstimate> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("shrinkage must lie in [0, 1], got {delta}")));
    }
    let t = window.n_dates();
    if t < 2 {
        return Err(Error::Estimation(format!(
            "covariance window needs at least 2 dates, got {t}"
        )));
    }
    let n = window.n_instruments();
    let col = |i: usize| -> Vec<Option<f64>> { (0..t).map(|d| window.get(d, i)).collect() };
    let cols: Vec<Vec<Option<f64>>> = (0..n).map(col).collect();
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut complete = true;
    for i in 0..n {
        for j in 0..=i {
            let pairs: Vec<(f64, f64)> = cols[i]
                .iter()
                .zip(&cols[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .collect();
            if pairs.len() < t {
                complete = false;
            }
            let c = if pairs.len() < 2 {
                0.0
            } else {
                let k = pairs.len() as f64;
                let ma = pairs.iter().map(|p| p.0).sum::<f64>() / k;
                let mb = pairs.iter().map(|p| p.1).sum::<f64>() / k;
                pairs.iter().map(|(a, b)| (a - ma) * (b - mb)).sum::<f64>() / (k - 1.0)
            };
            s[(i, j)] = c;
            s[(j, i)] = c;
        }
    }
    if !complete {
        s = clip_to_psd(s);
    }
    let target = s.trace() / n.max(1) as f64;
    let mut m = s * (1.0 - delta);
    for i in 0..n {
        m[(i, i)] += delta * target;
    }
    Ok(CovEstimate {
        matrix: m,
        lookback: t,
        shrinkage: delta,
    })
}

fn clip_to_psd(s: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s);
    if eig.eigenvalues.iter().all(|v| *v >= 0.0) {
        return eig.recompose();
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    // symmetrize away rounding
    let n = out.nrows();
    for i in 0..n {
        for j in 0..i {
            let a = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = a;
            out[(j, i)] = a;
        }
    }
    out
}
