use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dataset::IVDataset;
use crate::error::{IvError, Result};
use crate::linalg;

/// Covariance estimator for the reduced-form coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    Homoskedastic,
    /// Heteroskedasticity-robust sandwich.
    #[default]
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    Individual,
    Summary,
}

/// One row of two-sample summary statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub gamma_hat: f64,
    pub se_gamma: f64,
    #[serde(rename = "Gamma_hat")]
    pub big_gamma_hat: f64,
    #[serde(rename = "se_Gamma")]
    pub se_big_gamma: f64,
}

/// Reduced-form estimates `(Gamma_hat, gamma_hat)` with their joint covariance.
///
/// `cov` is the finite-sample covariance of the stacked vector `(Gamma_hat, gamma_hat)`
/// (entries `0..p` are `Gamma`, `p..2p` are `gamma`). For individual-level fits it equals
/// the asymptotic covariance `Omega` divided by `n`; for summary statistics it is the
/// diagonal of squared standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedFormFit {
    pub gamma_hat: DVector<f64>,
    pub big_gamma_hat: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n: Option<usize>,
    pub source: FitSource,
}

impl ReducedFormFit {
    pub fn p(&self) -> usize {
        self.gamma_hat.len()
    }

    /// Asymptotic covariance `Omega = n * cov`; needs a known sample size.
    pub fn omega(&self) -> Result<DMatrix<f64>> {
        let n = self.n.ok_or(IvError::MissingSampleSize)?;
        Ok(&self.cov * n as f64)
    }

    pub fn sample_size(&self) -> Result<usize> {
        self.n.ok_or(IvError::MissingSampleSize)
    }

    pub fn var_big_gamma(&self, j: usize) -> f64 {
        self.cov[(j, j)]
    }

    pub fn var_gamma(&self, j: usize) -> f64 {
        let p = self.p();
        self.cov[(p + j, p + j)]
    }

    /// Covariance between `Gamma_hat_j` and `gamma_hat_k`.
    pub fn cov_big_small(&self, j: usize, k: usize) -> f64 {
        self.cov[(j, self.p() + k)]
    }

    /// Errors unless every `|gamma_hat_j| > 1e-12`.
    pub fn check_first_stage(&self) -> Result<()> {
        match self.gamma_hat.iter().position(|g| g.abs() <= 1e-12) {
            Some(index) => Err(IvError::ZeroFirstStage { index }),
            None => Ok(()),
        }
    }

    pub fn ratio(&self, j: usize) -> f64 {
        self.big_gamma_hat[j] / self.gamma_hat[j]
    }

    pub fn ratios(&self) -> Vec<f64> {
        (0..self.p()).map(|j| self.ratio(j)).collect()
    }

    /// Delta-method standard error of `Gamma_hat_j - b * gamma_hat_j`.
    pub fn residual_se(&self, j: usize, b: f64) -> f64 {
        let v = self.var_big_gamma(j) - 2.0 * b * self.cov_big_small(j, j) + b * b * self.var_gamma(j);
        v.max(0.0).sqrt()
    }

    /// Delta-method standard error of the ratio `Gamma_hat_j / gamma_hat_j`.
    pub fn ratio_se(&self, j: usize) -> f64 {
        self.residual_se(j, self.ratio(j)) / self.gamma_hat[j].abs()
    }

    /// Delta-method standard error of `r_j - r_k` using the joint block of
    /// `(Gamma_j, gamma_j, Gamma_k, gamma_k)`.
    pub fn ratio_diff_se(&self, j: usize, k: usize) -> f64 {
        let p = self.p();
        let (rj, rk) = (self.ratio(j), self.ratio(k));
        let (gj, gk) = (self.gamma_hat[j], self.gamma_hat[k]);
        let idx = [j, p + j, k, p + k];
        let grad = [1.0 / gj, -rj / gj, -1.0 / gk, rk / gk];
        let mut v = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                v += grad[a] * grad[b] * self.cov[(idx[a], idx[b])];
            }
        }
        v.max(0.0).sqrt()
    }

    /// Exports per-instrument summary statistics (the off-diagonal covariance is dropped).
    pub fn to_summary_records(&self) -> Vec<SummaryRecord> {
        (0..self.p())
            .map(|j| SummaryRecord {
                gamma_hat: self.gamma_hat[j],
                se_gamma: self.var_gamma(j).sqrt(),
                big_gamma_hat: self.big_gamma_hat[j],
                se_big_gamma: self.var_big_gamma(j).sqrt(),
            })
            .collect()
    }

    /// Copy restricted to a subset of instruments.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let p = self.p();
        let full: Vec<usize> = idx.iter().copied().chain(idx.iter().map(|&j| p + j)).collect();
        Self {
            gamma_hat: linalg::select_entries(&self.gamma_hat, idx),
            big_gamma_hat: linalg::select_entries(&self.big_gamma_hat, idx),
            cov: linalg::select_block(&self.cov, &full, &full),
            n: self.n,
            source: self.source,
        }
    }
}

/// OLS of outcome and exposure on the instruments with the joint covariance of the
/// two coefficient vectors.
pub fn fit_reduced_form(data: &IVDataset, cov_mode: CovMode) -> Result<ReducedFormFit> {
    let z = data.instruments();
    let n = data.n();
    let p = data.p();
    linalg::ensure_full_column_rank(z, "instrument matrix")?;
    let zz = z.tr_mul(z);
    let chol = linalg::cholesky(&zz, "Z'Z")?;
    let big_gamma_hat = chol.solve(&z.tr_mul(data.outcome()));
    let gamma_hat = chol.solve(&z.tr_mul(data.exposure()));
    let e = data.outcome() - z * &big_gamma_hat;
    let delta = data.exposure() - z * &gamma_hat;
    let zz_inv = chol.inverse();

    let mut cov = DMatrix::zeros(2 * p, 2 * p);
    let resid = [&e, &delta];
    match cov_mode {
        CovMode::Homoskedastic => {
            let dof = (n - p) as f64;
            for a in 0..2 {
                for b in 0..2 {
                    let s = resid[a].dot(resid[b]) / dof;
                    cov.view_mut((a * p, b * p), (p, p)).copy_from(&(&zz_inv * s));
                }
            }
        }
        CovMode::Robust => {
            for a in 0..2 {
                for b in a..2 {
                    let w = resid[a].component_mul(resid[b]);
                    let mut zw = z.clone();
                    for (i, mut row) in zw.row_iter_mut().enumerate() {
                        row *= w[i];
                    }
                    let meat = z.tr_mul(&zw);
                    let block = &zz_inv * meat * &zz_inv;
                    cov.view_mut((a * p, b * p), (p, p)).copy_from(&block);
                    if a != b {
                        cov.view_mut((b * p, a * p), (p, p)).copy_from(&block.transpose());
                    }
                }
            }
        }
    }
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(ReducedFormFit {
        gamma_hat,
        big_gamma_hat,
        cov,
        n: Some(n),
        source: FitSource::Individual,
    })
}

/// Packs two-sample summary statistics into a fit with diagonal covariance and no
/// cross-covariance between `Gamma_hat` and `gamma_hat`.
pub fn load_summary_stats(records: &[SummaryRecord], n: Option<usize>) -> Result<ReducedFormFit> {
    if records.is_empty() {
        return Err(IvError::EmptyInput);
    }
    let p = records.len();
    let mut cov = DMatrix::zeros(2 * p, 2 * p);
    for (j, r) in records.iter().enumerate() {
        if !(r.se_gamma > 0.0) || !(r.se_big_gamma > 0.0) {
            return Err(IvError::NonPositiveSE { index: j });
        }
        cov[(j, j)] = r.se_big_gamma * r.se_big_gamma;
        cov[(p + j, p + j)] = r.se_gamma * r.se_gamma;
    }
    Ok(ReducedFormFit {
        gamma_hat: DVector::from_iterator(p, records.iter().map(|r| r.gamma_hat)),
        big_gamma_hat: DVector::from_iterator(p, records.iter().map(|r| r.big_gamma_hat)),
        cov,
        n,
        source: FitSource::Summary,
    })
}
