//! Likelihood estimation for the outcome model with a log-linear variance in the instruments
//! and confounding that enters through `alpha D exp(eta_0 + Z eta)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{bfgs, BfgsOptions};
use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{EstimateReport, IVDataset};
use crate::{stats, DEFAULT_ALPHA};

/// Bounds on `exp(eta_0 + Z eta)` over the data.
pub const VARIANCE_BOUNDS: (f64, f64) = (1e-12, 1e12);
pub const DEFAULT_STARTS: usize = 5;
/// The variance slopes count as weakly identified unless their Wald test rejects at this level.
pub const WEAK_ETA_LEVEL: f64 = 0.001;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisteriParams {
    pub beta0: f64,
    /// Average treatment effect on the treated.
    pub beta: f64,
    pub pi: DVector<f64>,
    pub alpha: f64,
    pub eta0: f64,
    pub eta: DVector<f64>,
}

impl MisteriParams {
    pub fn dim(p: usize) -> usize {
        2 * p + 4
    }

    /// Layout `[beta0, beta, pi, alpha, eta0, eta]`.
    pub fn to_vector(&self) -> DVector<f64> {
        let p = self.pi.len();
        let mut v = DVector::zeros(Self::dim(p));
        v[0] = self.beta0;
        v[1] = self.beta;
        v.rows_mut(2, p).copy_from(&self.pi);
        v[p + 2] = self.alpha;
        v[p + 3] = self.eta0;
        v.rows_mut(p + 4, p).copy_from(&self.eta);
        v
    }

    pub fn from_vector(v: &DVector<f64>, p: usize) -> Self {
        Self {
            beta0: v[0],
            beta: v[1],
            pi: v.rows(2, p).into_owned(),
            alpha: v[p + 2],
            eta0: v[p + 3],
            eta: v.rows(p + 4, p).into_owned(),
        }
    }
}

/// Log-likelihood of `Y | D, Z` and its gradient in the `to_vector` layout.
pub fn misteri_loglik(params: &MisteriParams, data: &IVDataset) -> Result<(f64, DVector<f64>)> {
    let p = data.p();
    if params.pi.len() != p || params.eta.len() != p {
        return Err(IvError::DimensionMismatch(format!("parameters sized for {} instruments, data has {p}", params.pi.len())));
    }
    let (y, d, z) = (data.outcome(), data.exposure(), data.instruments());
    let (lo, hi) = (VARIANCE_BOUNDS.0.ln(), VARIANCE_BOUNDS.1.ln());
    let n = data.n();
    let s_all = z * &params.eta;
    let zpi = z * &params.pi;
    let mut q = DVector::zeros(n);
    let mut ds = DVector::zeros(n);
    let mut value = 0.0;
    let (mut g_b0, mut g_b, mut g_a, mut g_e0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let s = params.eta0 + s_all[i];
        if !(s >= lo && s <= hi) {
            return Err(IvError::NumericalOverflow(format!("exp(eta0 + Z eta) = exp({s:.3}) at row {i}")));
        }
        let var = s.exp();
        let mu = params.beta0 + params.beta * d[i] + zpi[i] + params.alpha * d[i] * var;
        let r = y[i] - mu;
        let qi = r / var;
        value += -0.5 * LN_2PI - 0.5 * s - 0.5 * r * qi;
        let dsi = -0.5 + 0.5 * r * qi + params.alpha * d[i] * r;
        g_b0 += qi;
        g_b += qi * d[i];
        g_a += qi * d[i] * var;
        g_e0 += dsi;
        q[i] = qi;
        ds[i] = dsi;
    }
    let mut grad = DVector::zeros(MisteriParams::dim(p));
    grad[0] = g_b0;
    grad[1] = g_b;
    grad.rows_mut(2, p).copy_from(&z.tr_mul(&q));
    grad[p + 2] = g_a;
    grad[p + 3] = g_e0;
    grad.rows_mut(p + 4, p).copy_from(&z.tr_mul(&ds));
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisteriOptions {
    pub starts: usize,
    pub jitter: f64,
    pub seed: u64,
    pub alpha: f64,
    pub bfgs: BfgsOptions,
}

impl Default for MisteriOptions {
    fn default() -> Self {
        Self { starts: DEFAULT_STARTS, jitter: 0.1, seed: 0, alpha: DEFAULT_ALPHA, bfgs: BfgsOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisteriFit {
    pub params: MisteriParams,
    pub loglik: f64,
    /// Inverse observed information; `None` when the information is not positive definite.
    pub cov: Option<DMatrix<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

impl MisteriFit {
    pub fn se(&self) -> Option<DVector<f64>> {
        self.cov.as_ref().map(|c| c.diagonal().map(|v| v.max(0.0).sqrt()))
    }
}

/// OLS start: `(beta0, beta, pi)` from `Y ~ 1 + D + Z`, `alpha = 0`, `(eta0, eta)` from the
/// log squared residuals on `1 + Z`.
pub fn initial_params(data: &IVDataset) -> Result<MisteriParams> {
    let n = data.n();
    let p = data.p();
    let mut x = DMatrix::from_element(n, p + 2, 1.0);
    x.set_column(1, data.exposure());
    x.view_mut((0, 2), (n, p)).copy_from(data.instruments());
    let coef = linalg::ols(&x, data.outcome())?;
    let resid = data.outcome() - &x * &coef;
    let floor = 1e-12 * resid.norm_squared() / n as f64;
    let logr2 = resid.map(|r| (r * r + floor).max(f64::MIN_POSITIVE).ln());
    let mut w = DMatrix::from_element(n, p + 1, 1.0);
    w.view_mut((0, 1), (n, p)).copy_from(data.instruments());
    let eta = linalg::ols(&w, &logr2)?;
    Ok(MisteriParams {
        beta0: coef[0],
        beta: coef[1],
        pi: coef.rows(2, p).into_owned(),
        alpha: 0.0,
        eta0: eta[0],
        eta: eta.rows(1, p).into_owned(),
    })
}

pub fn misteri_estimate(data: &IVDataset, opts: &MisteriOptions) -> Result<MisteriFit> {
    let n = data.n();
    let p = data.p();
    if p == 0 {
        return Err(IvError::EmptyInput);
    }
    let needed = 10 * MisteriParams::dim(p);
    if n < needed {
        return Err(IvError::TooFewObservations { n, needed });
    }
    let init = initial_params(data)?.to_vector();
    misteri_loglik(&MisteriParams::from_vector(&init, p), data)?;
    let nf = n as f64;
    let objective = |v: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let (l, g) = misteri_loglik(&MisteriParams::from_vector(v, p), data).ok()?;
        Some((-l / nf, -g / nf))
    };
    let starts: Vec<DVector<f64>> = (0..opts.starts.max(1))
        .map(|k| {
            if k == 0 {
                return init.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            init.map(|v| v + opts.jitter * { let e: f64 = StandardNormal.sample(&mut rng); e })
        })
        .collect();
    let runs: Vec<_> = starts.into_par_iter().map(|s| bfgs(objective, s, &opts.bfgs)).collect();
    let best = runs
        .into_iter()
        .flatten()
        .filter(|r| r.value.is_finite() && r.x.iter().all(|v| v.is_finite()))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| IvError::OptimizerDiverged("no start produced a finite likelihood".into()))?;

    let params = MisteriParams::from_vector(&best.x, p);
    let info = -observed_hessian(&best.x, data)?;
    let cov = linalg::cholesky(&info, "observed information").ok().map(|c| c.inverse());
    Ok(MisteriFit { params, loglik: -best.value * nf, cov, converged: best.converged, iterations: best.iterations })
}

/// Central differences of the analytic gradient, symmetrized.
fn observed_hessian(x: &DVector<f64>, data: &IVDataset) -> Result<DMatrix<f64>> {
    let p = data.p();
    let k = x.len();
    let cols: Vec<DVector<f64>> = (0..k)
        .into_par_iter()
        .map(|j| -> Result<DVector<f64>> {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut up = x.clone();
            let mut dn = x.clone();
            up[j] += h;
            dn[j] -= h;
            let (_, gu) = misteri_loglik(&MisteriParams::from_vector(&up, p), data)?;
            let (_, gd) = misteri_loglik(&MisteriParams::from_vector(&dn, p), data)?;
            Ok((gu - gd) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let hess = DMatrix::from_columns(&cols);
    Ok((&hess + hess.transpose()) * 0.5)
}

pub fn misteri_fit(data: &IVDataset) -> Result<EstimateReport> {
    misteri_fit_with(data, &MisteriOptions::default())
}

pub fn misteri_fit_with(data: &IVDataset, opts: &MisteriOptions) -> Result<EstimateReport> {
    let fit = misteri_estimate(data, opts)?;
    let p = data.p();
    let beta = fit.params.beta;
    let mut report = match fit.se() {
        Some(se) => EstimateReport::wald("misteri", beta, se[1], opts.alpha).diag("param_se", se.iter().copied().collect::<Vec<_>>()),
        None => EstimateReport::point("misteri", beta),
    };
    report.set_diag("params", fit.params.to_vector().iter().copied().collect::<Vec<_>>());
    report.set_diag("loglik", fit.loglik);
    report.set_diag("iterations", fit.iterations);
    report.set_diag("converged", fit.converged);
    report.set_diag("estimand", "average treatment effect on the treated");
    match &fit.cov {
        Some(cov) => {
            let idx: Vec<usize> = (p + 4..2 * p + 4).collect();
            let c_eta = linalg::select_block(cov, &idx, &idx);
            let wald = linalg::cholesky(&c_eta, "eta covariance")
                .map(|ch| fit.params.eta.dot(&ch.solve(&fit.params.eta)))
                .unwrap_or(0.0);
            let pv = stats::chi2_sf(p as f64, wald);
            report.set_diag("eta_wald", wald);
            report.set_diag("eta_p_value", pv);
            if pv > WEAK_ETA_LEVEL {
                report.warn(format!(
                    "IdentificationWeak: variance slopes eta are not distinguishable from zero (Wald = {wald:.3}, p = {pv:.3})"
                ));
            }
        }
        None => report.warn("IdentificationWeak: observed information is not positive definite"),
    }
    if !fit.converged {
        report.warn("OptimizerTolerance: gradient tolerance not reached; estimate is the best point found");
    }
    Ok(report)
}
