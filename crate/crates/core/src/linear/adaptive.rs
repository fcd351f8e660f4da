//! Adaptive Lasso with a median-based initializer and J-test downward selection of the
//! penalty level.

use nalgebra::DVector;

use super::iv_core::IvContext;
use super::lasso::{PenalizedIvProblem, WEIGHT_CAP};
use super::tsls::require_centered;
use crate::error::{IvError, Result};
use crate::model::{CovMode, EstimateReport, IVDataset};
use crate::selection::jtest::{default_level, downward_testing_in};
use crate::{stats, DEFAULT_ALPHA};

/// Penalty factors `min(1 / |pi_med_j|, WEIGHT_CAP)` and the number of capped entries.
pub fn adaptive_weights(pi_med: &DVector<f64>) -> (DVector<f64>, usize) {
    let mut capped = 0;
    let w = pi_med.map(|x| {
        let w = 1.0 / x.abs();
        if w.is_finite() && w <= WEIGHT_CAP {
            w
        } else {
            capped += 1;
            WEIGHT_CAP
        }
    });
    (w, capped)
}

pub fn adaptive_lasso(data: &IVDataset) -> Result<EstimateReport> {
    adaptive_lasso_with(data, None, CovMode::Robust)
}

/// `level` defaults to `0.1 / ln(n)`.
pub fn adaptive_lasso_with(data: &IVDataset, level: Option<f64>, cov_mode: CovMode) -> Result<EstimateReport> {
    require_centered(data)?;
    let ctx = IvContext::new(data)?;
    let cp = &ctx.cp;
    let gamma_hat = ctx.zz_chol.solve(&cp.zd);
    let big_gamma_hat = ctx.zz_chol.solve(&cp.zy);
    if let Some(index) = gamma_hat.iter().position(|g| g.abs() <= 1e-12) {
        return Err(IvError::ZeroFirstStage { index });
    }
    let ratios: Vec<f64> = (0..data.p()).map(|j| big_gamma_hat[j] / gamma_hat[j]).collect();
    let beta_med = stats::median(&ratios).expect("p >= 1");
    let pi_med = &big_gamma_hat - &gamma_hat * beta_med;
    let (weights, capped) = adaptive_weights(&pi_med);

    let problem = PenalizedIvProblem::from_cross(cp)?;
    let path = problem.path(&weights)?;

    // distinct nonempty valid sets along the path, largest first; for each set keep the
    // smallest penalty producing it
    let mut candidates: Vec<(Vec<usize>, usize)> = Vec::new();
    for k in 0..path.lambdas.len() {
        let set = path.valid_set_at(k);
        if set.is_empty() {
            continue;
        }
        match candidates.iter_mut().find(|(s, _)| *s == set) {
            Some(entry) => entry.1 = k,
            None => candidates.push((set, k)),
        }
    }
    candidates.sort_by_key(|c| std::cmp::Reverse(c.0.len()));
    let sets: Vec<Vec<usize>> = candidates.iter().map(|(s, _)| s.clone()).collect();
    let level = level.unwrap_or_else(|| default_level(data.n()));
    let chosen = downward_testing_in(&ctx, &sets, level)?;
    let k = candidates[chosen.position].1;

    let beta = path.beta_hats[k];
    let post = ctx.tsls(&chosen.set)?;
    let se = post.se(data, cov_mode);
    let mut report = EstimateReport::wald("adaptive-lasso", beta, se, DEFAULT_ALPHA)
        .with_valid_set(chosen.set.clone())
        .diag("lambda", path.lambdas[k])
        .diag("beta_median", beta_med)
        .diag("post_selection_tsls", post.beta)
        .diag("j_p_value", chosen.p_value)
        .diag("downward_level", level)
        .diag("downward_passed", chosen.passed)
        .diag("capped_weights", capped);
    if capped > 0 {
        report.warn(format!("InitializerDegenerate: {capped} median-initializer entries are zero; weights capped at {WEIGHT_CAP:e}"));
    }
    if !chosen.passed {
        report.warn("DownwardTesting: no candidate set passed the J test; smallest candidate returned");
    }
    Ok(report)
}
