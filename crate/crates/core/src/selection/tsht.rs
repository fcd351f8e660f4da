//! Two-stage hard thresholding: pairwise voting on ratio agreement.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg;
use crate::linear::iv_core::IvContext;
use crate::linear::tsls::require_centered;
use crate::model::{CovMode, EstimateReport, IVDataset, ReducedFormFit};
use crate::stats;

/// Pairwise agreement matrix: instrument `j` votes for `k` when their ratio estimates
/// differ by at most `threshold_quantile` standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingMatrix {
    pub entries: DMatrix<u8>,
    pub threshold_quantile: f64,
    pub se_pairs: DMatrix<f64>,
}

impl VotingMatrix {
    pub fn build(fit: &ReducedFormFit, alpha: f64) -> Result<Self> {
        fit.check_first_stage()?;
        let p = fit.p();
        let threshold_quantile = stats::normal_quantile(1.0 - alpha / (2.0 * p as f64));
        let ratios = fit.ratios();
        let mut se_pairs = DMatrix::zeros(p, p);
        let mut entries = DMatrix::from_element(p, p, 1u8);
        for j in 0..p {
            for k in (j + 1)..p {
                let se = fit.ratio_diff_se(j, k);
                se_pairs[(j, k)] = se;
                se_pairs[(k, j)] = se;
                let agree = (ratios[j] - ratios[k]).abs() <= threshold_quantile * se;
                entries[(j, k)] = agree as u8;
                entries[(k, j)] = agree as u8;
            }
        }
        Ok(Self { entries, threshold_quantile, se_pairs })
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    /// `||H_j||_0` for every instrument.
    pub fn votes(&self) -> Vec<usize> {
        (0..self.p())
            .map(|j| self.entries.row(j).iter().map(|&h| h as usize).sum())
            .collect()
    }

    /// Majority voters together with every instrument attaining the maximal vote count.
    pub fn selected_set(&self) -> Vec<usize> {
        let votes = self.votes();
        let max = votes.iter().copied().max().unwrap_or(0);
        let half = self.p() as f64 / 2.0;
        (0..self.p())
            .filter(|&j| votes[j] as f64 > half || votes[j] == max)
            .collect()
    }
}

/// Efficient GMM estimate from summary statistics on a valid set: minimizes
/// `(Gamma_V - b gamma_V)' S(b)^{-1} (Gamma_V - b gamma_V)` with `S(b)` the delta-method
/// covariance of the residual vector, iterated from the inverse-variance weighted start.
/// Returns `(beta, se)`.
pub fn summary_gmm(fit: &ReducedFormFit, valid: &[usize]) -> Result<(f64, f64)> {
    let sub = fit.subset(valid);
    let v = sub.p();
    let g = &sub.gamma_hat;
    let big = &sub.big_gamma_hat;
    let c_bb = sub.cov.view((0, 0), (v, v)).into_owned();
    let c_bs = sub.cov.view((0, v), (v, v)).into_owned();
    let c_ss = sub.cov.view((v, v), (v, v)).into_owned();
    let estimate = |w: &DMatrix<f64>| -> f64 {
        let wg = w * g;
        wg.dot(big) / wg.dot(g)
    };
    let residual_cov = |b: f64| -> DMatrix<f64> {
        &c_bb - (&c_bs + c_bs.transpose()) * b + &c_ss * (b * b)
    };
    let mut beta = estimate(&linalg::spd_inverse(&c_bb, "Gamma covariance")?);
    for _ in 0..3 {
        beta = estimate(&linalg::spd_inverse(&residual_cov(beta), "residual covariance")?);
    }
    let w = linalg::spd_inverse(&residual_cov(beta), "residual covariance")?;
    let info: f64 = g.dot(&(&w * g));
    Ok((beta, (1.0 / info).sqrt()))
}

/// TSHT with the voting threshold `z_{1 - alpha/(2p)}` and a `1 - alpha` Wald interval.
///
/// With individual-level `data` the final estimate is TSLS on the selected set; otherwise
/// it is [`summary_gmm`].
pub fn tsht(fit: &ReducedFormFit, alpha: f64, data: Option<&IVDataset>) -> Result<EstimateReport> {
    let vm = VotingMatrix::build(fit, alpha)?;
    let selected = vm.selected_set();
    let (beta, se) = match data {
        Some(ds) => {
            require_centered(ds)?;
            let ctx = IvContext::new(ds)?;
            let post = ctx.tsls(&selected)?;
            (post.beta, post.se(ds, CovMode::Robust))
        }
        None => summary_gmm(fit, &selected)?,
    };
    let mut report = EstimateReport::wald("tsht", beta, se, alpha)
        .with_valid_set(selected)
        .diag("votes", vm.votes())
        .diag("threshold_quantile", vm.threshold_quantile);
    let min_strength = (0..fit.p())
        .map(|j| fit.gamma_hat[j].abs() / fit.var_gamma(j).sqrt())
        .fold(f64::INFINITY, f64::min);
    report.set_diag("min_first_stage_t", min_strength);
    if min_strength < 2.0 {
        report.warn(format!("WeakInstrument: smallest first-stage t-statistic is {min_strength:.3}"));
    }
    Ok(report)
}
