use crate::error::Result;
use crate::model::{EstimateReport, ReducedFormFit};
use crate::stats;

/// Median of the per-instrument ratios `Gamma_hat_j / gamma_hat_j`.
///
/// No standard error is attached: the estimator's limiting law is a biased order
/// statistic.
pub fn median_estimator(fit: &ReducedFormFit) -> Result<EstimateReport> {
    fit.check_first_stage()?;
    let ratios = fit.ratios();
    let beta = stats::median(&ratios).expect("p >= 1");
    Ok(EstimateReport::point("median", beta).diag("ratios", ratios))
}
