//! Estimators that identify the effect through heteroskedasticity.

pub mod genius;
pub mod misteri;
pub mod optim;

pub use genius::{genius, genius_moments, genius_with, sumsq_objective, sumsq_weights, GeniusVariant};
pub use misteri::{initial_params, misteri_estimate, misteri_fit, misteri_fit_with, misteri_loglik, MisteriFit, MisteriOptions, MisteriParams};
pub use optim::{bfgs, BfgsOptions, BfgsResult};
