//! Estimation and inference for a causal effect when some instruments may be invalid.
//!
//! The crate covers the linear invalid-instrument model `D = Z'gamma + delta`,
//! `Y = D beta + Z'pi + epsilon`: point estimators that tolerate invalid instruments,
//! valid-instrument selection, uniformly valid confidence sets, estimators built on
//! nonlinearity or heteroskedasticity of the exposure, and a simulation harness.

pub mod error;
pub mod hetero;
pub mod linalg;
pub mod linear;
pub mod methods;
pub mod model;
pub mod nonlinear;
pub mod selection;
pub mod simulation;
pub mod stats;
pub mod uniform;

pub use error::{IvError, Result};
pub use model::{
    fit_reduced_form, load_summary_stats, CovMode, EstimateReport, IVDataset, IntervalUnion,
    ReducedFormFit,
};

/// Default two-sided level for Wald intervals.
pub const DEFAULT_ALPHA: f64 = 0.05;
