//! Point estimators under the linear invalid-instrument model.

pub mod adaptive;
pub mod iv_core;
pub mod kclass;
pub mod lasso;
pub mod median;
pub mod sisvive;
pub mod tsls;

pub use adaptive::adaptive_lasso;
pub use iv_core::{IvContext, TslsFit};
pub use kclass::{kclass_estimator, kclass_k, kclass_with_k};
pub use lasso::{LassoPath, PenalizedIvProblem};
pub use median::median_estimator;
pub use sisvive::{sisvive, sisvive_with, SisviveOptions};
pub use tsls::{ols, tsls, tsls_with_alpha};
