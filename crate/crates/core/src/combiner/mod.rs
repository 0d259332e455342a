//! Linear factor combination with rolling retraining, permutation importance
//! and style exposure decomposition.

mod exposure;
mod importance;
mod model;
mod rolling;

pub use exposure::{exposure_decomposition, ExposureReport};
pub use importance::{permutation_importance, FactorImportance, ImportanceReport};
pub use model::{fit, CombinerModel};
pub use rolling::{rolling_fit_predict, RollingResult, DEFAULT_LAMBDA_GRID};
