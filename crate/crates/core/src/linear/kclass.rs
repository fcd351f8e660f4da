use super::tsls::require_centered;
use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{CovMode, EstimateReport, IVDataset};
use crate::DEFAULT_ALPHA;

/// `k = (1 - 1/n) / (1 - p/n - 1/n)`.
pub fn kclass_k(n: usize, p: usize) -> Result<f64> {
    let nf = n as f64;
    let denom = 1.0 - p as f64 / nf - 1.0 / nf;
    if !(denom > 0.0) {
        return Err(IvError::DegenerateK { n, p });
    }
    Ok((1.0 - 1.0 / nf) / denom)
}

/// k-class estimator `D'(I - k M_Z) Y / D'(I - k M_Z) D` with the many-instrument `k`.
pub fn kclass_estimator(data: &IVDataset, cov_mode: CovMode) -> Result<EstimateReport> {
    let k = kclass_k(data.n(), data.p())?;
    kclass_with_k(data, k, cov_mode)
}

/// k-class estimator for an arbitrary `k`; `k = 1` is two-stage least squares.
pub fn kclass_with_k(data: &IVDataset, k: f64, cov_mode: CovMode) -> Result<EstimateReport> {
    require_centered(data)?;
    let z = data.instruments();
    let y = data.outcome();
    let d = data.exposure();
    let coef_d = linalg::ols(z, d)?;
    let md = d - z * coef_d;
    let w = d - &md * k;
    let den = w.dot(d);
    if !(den.abs() > 0.0) {
        return Err(IvError::RankDeficient("k-class denominator is zero".into()));
    }
    let beta = w.dot(y) / den;
    let u = y - d * beta;
    let se = match cov_mode {
        CovMode::Homoskedastic => (u.norm_squared() / data.n() as f64 / den.abs()).sqrt(),
        CovMode::Robust => {
            let meat: f64 = w.iter().zip(u.iter()).map(|(a, e)| a * a * e * e).sum();
            meat.sqrt() / den.abs()
        }
    };
    Ok(EstimateReport::wald("kclass", beta, se, DEFAULT_ALPHA).diag("k", k))
}
