use nalgebra::DVector;

use super::iv_core::IvContext;
use crate::error::{IvError, Result};
use crate::model::{CovMode, EstimateReport, IVDataset};
use crate::DEFAULT_ALPHA;

pub(crate) fn require_centered(data: &IVDataset) -> Result<()> {
    if data.is_centered() {
        Ok(())
    } else {
        Err(IvError::InvalidArgument(
            "dataset must be centered (call center_and_validate first)".into(),
        ))
    }
}

/// Two-stage least squares treating `valid_set` as valid and the remaining
/// instruments as included regressors.
pub fn tsls(data: &IVDataset, valid_set: &[usize], cov_mode: CovMode) -> Result<EstimateReport> {
    tsls_with_alpha(data, valid_set, cov_mode, DEFAULT_ALPHA)
}

pub fn tsls_with_alpha(
    data: &IVDataset,
    valid_set: &[usize],
    cov_mode: CovMode,
    alpha: f64,
) -> Result<EstimateReport> {
    require_centered(data)?;
    let ctx = IvContext::new(data)?;
    tsls_in_context(&ctx, data, valid_set, cov_mode, alpha, "tsls")
}

pub(crate) fn tsls_in_context(
    ctx: &IvContext,
    data: &IVDataset,
    valid_set: &[usize],
    cov_mode: CovMode,
    alpha: f64,
    method: &str,
) -> Result<EstimateReport> {
    let fit = ctx.tsls(valid_set)?;
    let se = fit.se(data, cov_mode);
    let mut report = EstimateReport::wald(method, fit.beta, se, alpha)
        .with_valid_set(fit.valid.clone())
        .diag("concentration", fit.strength);
    if fit.valid.len() >= 2 {
        report.set_diag("sargan", ctx.sargan(&fit));
    }
    Ok(report)
}

/// Ordinary least squares of the outcome on the exposure, ignoring the instruments.
pub fn ols(data: &IVDataset, cov_mode: CovMode, alpha: f64) -> Result<EstimateReport> {
    require_centered(data)?;
    let d = data.exposure();
    let y = data.outcome();
    let dd = d.dot(d);
    if !(dd > 0.0) {
        return Err(IvError::RankDeficient("exposure has zero variance".into()));
    }
    let beta = d.dot(y) / dd;
    let u: DVector<f64> = y - d * beta;
    let se = match cov_mode {
        CovMode::Homoskedastic => (u.norm_squared() / (data.n() as f64 - 2.0) / dd).sqrt(),
        CovMode::Robust => {
            let meat: f64 = d.iter().zip(u.iter()).map(|(a, e)| a * a * e * e).sum();
            meat.sqrt() / dd
        }
    };
    Ok(EstimateReport::wald("ols", beta, se, alpha))
}
