//! Some-invalid-some-valid IV estimator: l1-penalized direct effects followed by a
//! plug-in estimate of the causal effect.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lasso::{support_complement, PenalizedIvProblem};
use super::tsls::require_centered;
use crate::error::{IvError, Result};
use crate::model::{CrossProducts, EstimateReport, IVDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct SisviveOptions {
    /// Fixed penalty; chosen by cross-validation when `None`.
    pub lambda: Option<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SisviveOptions {
    fn default() -> Self {
        Self { lambda: None, folds: 10, seed: 0 }
    }
}

pub fn sisvive(data: &IVDataset, lambda: Option<f64>) -> Result<EstimateReport> {
    sisvive_with(data, &SisviveOptions { lambda, ..SisviveOptions::default() })
}

pub fn sisvive_with(data: &IVDataset, opts: &SisviveOptions) -> Result<EstimateReport> {
    require_centered(data)?;
    let cp = CrossProducts::from_dataset(data);
    let problem = PenalizedIvProblem::from_cross(&cp)?;
    let ones = DVector::from_element(data.p(), 1.0);
    let (lambda, pi, cv_error) = match opts.lambda {
        Some(lam) => (lam, problem.solve(lam, &ones, None)?, None),
        None => {
            let path = problem.path(&ones)?;
            let errors = cv_errors(data, &cp, &path.lambdas, opts)?;
            let best = argmin(&errors);
            (path.lambdas[best], path.pi_hats[best].clone(), Some(errors[best]))
        }
    };
    let beta = problem.beta_for(&pi);
    let mut report = EstimateReport::point("sisvive", beta)
        .with_valid_set(support_complement(&pi))
        .diag("lambda", lambda)
        .diag("lambda_max", problem.lambda_max(&ones))
        .diag("pi_hat", pi.iter().copied().collect::<Vec<_>>());
    if let Some(e) = cv_error {
        report.set_diag("cv_error", e);
    }
    Ok(report)
}

/// Seeded fold labels: a shuffled row order dealt round-robin into `folds` groups.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, &i) in rows.iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Held-out first-step loss summed over folds, one entry per `lambda`.
fn cv_errors(data: &IVDataset, cp: &CrossProducts, lambdas: &[f64], opts: &SisviveOptions) -> Result<Vec<f64>> {
    if opts.folds < 2 || opts.folds > data.n() {
        return Err(IvError::InvalidArgument(format!("cannot split {} rows into {} folds", data.n(), opts.folds)));
    }
    let ones = DVector::from_element(data.p(), 1.0);
    let folds = fold_assignment(data.n(), opts.folds, opts.seed);
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|rows| {
            let test_cp = CrossProducts::from_rows(data, rows);
            let train = PenalizedIvProblem::from_cross(&cp.minus(&test_cp))?;
            let test = PenalizedIvProblem::from_cross(&test_cp)?;
            let path = train.path_on(lambdas, &ones)?;
            Ok(path.pi_hats.iter().map(|pi| test.loss(pi)).collect())
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; lambdas.len()];
    for errs in &per_fold {
        for (t, e) in total.iter_mut().zip(errs) {
            *t += e;
        }
    }
    Ok(total)
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}
