//! Moment estimation from heteroskedasticity of the exposure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{EstimateReport, IVDataset};
use crate::{stats, DEFAULT_ALPHA};

/// Relative size of the averaged interaction-instrument covariance with `D` below which
/// the estimating equation is treated as degenerate.
pub const DEGENERATE_RELEVANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeniusVariant {
    /// Identity-weighted GMM on the averaged moments.
    #[default]
    GmmMean,
    /// Sum over observations of squared moment vectors.
    Sumsq,
}

/// Pieces shared by both variants: centered instruments `x_i`, first-stage residuals `r_i`
/// and the regressors `[1, Z]` with their Gram matrix.
struct Parts {
    x: DMatrix<f64>,
    r: DVector<f64>,
    w: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
}

fn parts(data: &IVDataset) -> Result<Parts> {
    let n = data.n();
    let p = data.p();
    if n < p + 3 {
        return Err(IvError::TooFewObservations { n, needed: p + 3 });
    }
    let x = linalg::center_columns(data.instruments());
    let mut w = DMatrix::from_element(n, p + 1, 1.0);
    w.view_mut((0, 1), (n, p)).copy_from(data.instruments());
    let gram = w.tr_mul(&w);
    let gram_inv = linalg::spd_inverse(&gram, "first-stage design")?;
    let gamma = &gram_inv * w.tr_mul(data.exposure());
    let r = data.exposure() - &w * gamma;
    Ok(Parts { x, r, w, gram_inv: gram_inv * n as f64 })
}

/// Averaged moments `mean_i (Z_i - Zbar) r_i (Y_i - b D_i)`.
pub fn genius_moments(data: &IVDataset, b: f64) -> Result<DVector<f64>> {
    let pt = parts(data)?;
    let u = data.outcome() - data.exposure() * b;
    Ok(pt.x.tr_mul(&pt.r.component_mul(&u)) / data.n() as f64)
}

/// Per-observation weights `||(Z_i - Zbar) r_i||^2` of the sum-of-squares objective.
pub fn sumsq_weights(data: &IVDataset) -> Result<DVector<f64>> {
    let pt = parts(data)?;
    Ok(DVector::from_fn(data.n(), |i, _| pt.x.row(i).norm_squared() * pt.r[i] * pt.r[i]))
}

/// `sum_i ||(Z_i - Zbar) r_i (Y_i - b D_i)||^2`.
pub fn sumsq_objective(data: &IVDataset, b: f64) -> Result<f64> {
    let w = sumsq_weights(data)?;
    let (y, d) = (data.outcome(), data.exposure());
    Ok((0..data.n()).map(|i| w[i] * (y[i] - b * d[i]).powi(2)).sum())
}

pub fn genius(data: &IVDataset, variant: GeniusVariant) -> Result<EstimateReport> {
    genius_with(data, variant, DEFAULT_ALPHA)
}

pub fn genius_with(data: &IVDataset, variant: GeniusVariant, alpha: f64) -> Result<EstimateReport> {
    let pt = parts(data)?;
    let n = data.n();
    let nf = n as f64;
    let p = data.p();
    let (y, d) = (data.outcome(), data.exposure());

    let xr = DMatrix::from_fn(n, p, |i, j| pt.x[(i, j)] * pt.r[i]);
    let a_d = xr.tr_mul(d) / nf;
    let a_y = xr.tr_mul(y) / nf;
    let d_mean = d.mean();
    let var_d = d.iter().map(|v| (v - d_mean).powi(2)).sum::<f64>() / nf;
    let scale = (pt.x.norm_squared() / nf).sqrt() * var_d;
    if !(a_d.norm() > DEGENERATE_RELEVANCE * scale) {
        return Err(IvError::HomoskedasticExposure);
    }

    // estimate, the per-observation estimating function and its nuisance derivatives
    let (beta, jac, psi, g_mu, g_gamma) = match variant {
        GeniusVariant::GmmMean => {
            let beta = a_d.dot(&a_y) / a_d.dot(&a_d);
            let u = y - d * beta;
            let s = &pt.x * &a_d;
            let psi = DVector::from_fn(n, |i, _| s[i] * pt.r[i] * u[i]);
            let ru_mean = pt.r.component_mul(&u).mean();
            let g_mu = -&a_d * ru_mean;
            let su = s.component_mul(&u);
            let g_gamma = -pt.w.tr_mul(&su) / nf;
            (beta, a_d.dot(&a_d), psi, g_mu, g_gamma)
        }
        GeniusVariant::Sumsq => {
            let wts = DVector::from_fn(n, |i, _| pt.x.row(i).norm_squared() * pt.r[i] * pt.r[i]);
            let num: f64 = (0..n).map(|i| wts[i] * y[i] * d[i]).sum();
            let den: f64 = (0..n).map(|i| wts[i] * d[i] * d[i]).sum();
            let beta = num / den;
            let u = y - d * beta;
            let psi = DVector::from_fn(n, |i, _| wts[i] * d[i] * u[i]);
            let mut g_mu = DVector::zeros(p);
            let mut g_gamma = DVector::zeros(p + 1);
            for i in 0..n {
                let du = d[i] * u[i];
                g_mu -= pt.x.row(i).transpose() * (2.0 * pt.r[i] * pt.r[i] * du);
                g_gamma -= pt.w.row(i).transpose() * (2.0 * pt.x.row(i).norm_squared() * pt.r[i] * du);
            }
            (beta, den / nf, psi, g_mu / nf, g_gamma / nf)
        }
    };
    // influence: psi + G_mu'(Z_i - mu) + G_gamma' H^{-1} W_i r_i
    let lin = &pt.gram_inv * g_gamma;
    let ss: f64 = (0..n)
        .map(|i| {
            let f = psi[i] + pt.x.row(i).dot(&g_mu.transpose()) + pt.w.row(i).dot(&lin.transpose()) * pt.r[i];
            f * f
        })
        .sum();
    let se = ss.sqrt() / (nf * jac.abs());

    let (het_f, het_p) = hetero_score(&pt, n, p)?;
    let name = match variant {
        GeniusVariant::GmmMean => "genius",
        GeniusVariant::Sumsq => "genius-sumsq",
    };
    let mut report = EstimateReport::wald(name, beta, se, alpha)
        .diag("heteroskedasticity_f", het_f)
        .diag("heteroskedasticity_p_value", het_p)
        .diag("relevance", a_d.norm() / scale);
    if het_p > 0.05 {
        report.warn(format!(
            "Homoskedastic: no evidence that Var(D|Z) varies with Z (F = {het_f:.3}, p = {het_p:.3}); the estimating equation is near singular"
        ));
    }
    Ok(report)
}

/// Regression F statistic of the squared first-stage residuals on the instruments.
fn hetero_score(pt: &Parts, n: usize, p: usize) -> Result<(f64, f64)> {
    let r2 = pt.r.map(|v| v * v);
    let coef = &pt.gram_inv * pt.w.tr_mul(&r2) / n as f64;
    let fitted = &pt.w * coef;
    let mean = r2.mean();
    let ssm: f64 = fitted.iter().map(|f| (f - mean).powi(2)).sum();
    let sse: f64 = (&r2 - &fitted).norm_squared();
    let dof = (n - p - 1) as f64;
    let f = (ssm / p as f64) / (sse / dof);
    Ok((f, stats::f_sf(p as f64, dof, f)))
}
