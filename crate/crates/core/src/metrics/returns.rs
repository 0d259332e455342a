use crate::dsl::FactorMatrix;
use crate::error::{Error, Result};
use crate::panel::PanelFrame;

/// Forward returns over `horizon` periods: cell `(t, i)` is
/// `price(t + horizon) / price(t) - 1`. The last `horizon` dates are masked.
///
/// These look into the future by construction and are only ever used as
/// evaluation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardReturns {
    horizon: usize,
    surface: FactorMatrix,
}

impl ForwardReturns {
    pub fn from_prices(panel: &PanelFrame, price_field: &str, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let f = panel.field_index(price_field)?;
        let nd = panel.n_dates();
        let surface = FactorMatrix::from_fn(panel.dates_arc(), panel.instruments_arc(), |d, i| {
            if d + horizon >= nd {
                return None;
            }
            let p0 = panel.get(d, i, f)?;
            let p1 = panel.get(d + horizon, i, f)?;
            (p0 != 0.0).then(|| p1 / p0 - 1.0)
        });
        Ok(Self { horizon, surface })
    }

    /// Wrap a precomputed return surface, masking its last `horizon` dates.
    pub fn from_surface(mut surface: FactorMatrix, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let nd = surface.n_dates();
        surface.mask_dates(nd.saturating_sub(horizon)..nd);
        Ok(Self { horizon, surface })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn surface(&self) -> &FactorMatrix {
        &self.surface
    }

    pub fn slice_dates(&self, range: std::ops::Range<usize>) -> ForwardReturns {
        ForwardReturns {
            horizon: self.horizon,
            surface: self.surface.slice_dates(range),
        }
    }
}
