//! Two-stage curvature identification with a sample-split first stage.

use nalgebra::{DMatrix, DVector};

use super::learners::{fit_learner, random_split, ForestOptions, HatMatrixFit, Learner};
use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{EstimateReport, IVDataset};
use crate::DEFAULT_ALPHA;

pub const MIN_SAMPLE: usize = 200;
pub const DEFAULT_SPLIT_FRACTION: f64 = 0.5;
/// `D'MD / n_A` below this is treated as no curvature at all.
pub const CURVATURE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TsciOptions {
    pub learner: Learner,
    pub split_fraction: f64,
    pub seed: u64,
    pub alpha: f64,
    pub forest: ForestOptions,
}

impl Default for TsciOptions {
    fn default() -> Self {
        Self {
            learner: Learner::BasisSpline,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            forest: ForestOptions::default(),
        }
    }
}

pub fn tsci(data: &IVDataset, learner: Learner, split_fraction: f64, seed: u64) -> Result<EstimateReport> {
    tsci_with(data, &TsciOptions { learner, split_fraction, seed, ..TsciOptions::default() })
}

fn check_split(n: usize, fraction: f64) -> Result<()> {
    if n < MIN_SAMPLE {
        return Err(IvError::SplitTooSmall(format!("n = {n}, need at least {MIN_SAMPLE}")));
    }
    if !(fraction > 0.2 && fraction < 0.8) {
        return Err(IvError::SplitTooSmall(format!("split fraction {fraction} outside (0.2, 0.8)")));
    }
    Ok(())
}

/// Splits the sample and fits the first-stage learner on split B.
pub fn fit_hat_matrix(data: &IVDataset, opts: &TsciOptions) -> Result<HatMatrixFit> {
    check_split(data.n(), opts.split_fraction)?;
    let (a, b) = random_split(data.n(), opts.split_fraction, opts.seed);
    Ok(fit_learner(data.instruments(), data.exposure(), a, b, opts.learner, &opts.forest, opts.seed))
}

pub fn tsci_with(data: &IVDataset, opts: &TsciOptions) -> Result<EstimateReport> {
    let hat = fit_hat_matrix(data, opts)?;
    let z = linalg::center_columns(data.instruments());
    let y = linalg::center_vector(data.outcome());
    let d = linalg::center_vector(data.exposure());
    let a = &hat.split_a;
    let n1 = a.len();
    let q = &hat.q;

    let y_a = linalg::select_entries(&y, a);
    let d_a = linalg::select_entries(&d, a);
    let mut z_a = DMatrix::from_element(n1, z.ncols() + 1, 1.0);
    z_a.view_mut((0, 1), (n1, z.ncols())).copy_from(&z.select_rows(a.iter()));
    let z_tilde = q.apply_matrix(&z_a);
    let gram = linalg::cholesky(&z_tilde.tr_mul(&z_tilde), "Q Z_A")?;
    let resid = |w: &DVector<f64>| w - &z_tilde * gram.solve(&z_tilde.tr_mul(w));

    let f_hat = &q.apply(&d_a);
    let md = q.apply(&resid(f_hat));
    let dmd = d_a.dot(&md);
    let ymd = y_a.dot(&md);
    if !(dmd / n1 as f64 >= CURVATURE_FLOOR) {
        return Err(IvError::WeakCurvature(format!("D'MD / n_A = {:.3e}", dmd / n1 as f64)));
    }
    let beta_tilde = ymd / dmd;

    // full-sample residual of Y - D b on the instruments, restricted to split A
    let zz = linalg::cholesky(&z.tr_mul(&z), "instrument matrix")?;
    let eps_at = |b: f64| -> DVector<f64> {
        let u = &y - &d * b;
        let e = &u - &z * zz.solve(&z.tr_mul(&u));
        linalg::select_entries(&e, a)
    };
    let eps = eps_at(beta_tilde);
    let delta = &d_a - f_hat;
    let r = q.apply_matrix(&z_tilde);
    let norms = q.row_norms_squared();
    let m_diag: Vec<f64> = (0..n1)
        .map(|i| {
            let ri = r.row(i).transpose();
            norms[i] - ri.dot(&gram.solve(&ri))
        })
        .collect();
    let correction: f64 = (0..n1).map(|i| m_diag[i] * delta[i] * eps[i]).sum::<f64>() / dmd;
    let beta = beta_tilde - correction;

    let eps_final = eps_at(beta);
    let se = md.component_mul(&eps_final).norm() / dmd;

    let lin = linalg::ols(&z_a, f_hat)?;
    let curvature = (f_hat - &z_a * lin).norm_squared() / n1 as f64;
    let trace_m: f64 = m_diag.iter().sum();
    let sigma2_delta = delta.norm_squared() / n1 as f64;
    let strength = if sigma2_delta > 0.0 { dmd / sigma2_delta } else { f64::INFINITY };

    let mut report = EstimateReport::wald("tsci", beta, se, opts.alpha)
        .diag("learner", format!("{:?}", opts.learner))
        .diag("split_fraction", opts.split_fraction)
        .diag("n_a", n1)
        .diag("beta_uncorrected", beta_tilde)
        .diag("bias_correction", correction)
        .diag("curvature", curvature)
        .diag("iv_strength", if strength.is_finite() { strength } else { f64::MAX })
        .diag("trace_m", trace_m);
    if strength < weak_threshold(trace_m) {
        report.warn(format!(
            "WeakCurvature: IV strength {strength:.2} below {:.2}; the first stage looks linear in the instruments",
            weak_threshold(trace_m)
        ));
    }
    Ok(report)
}

/// Strength cutoff: `D'MD / sigma_delta^2` is near `trace(M)` when the first stage is linear.
fn weak_threshold(trace_m: f64) -> f64 {
    2.0 * trace_m + 10.0
}
