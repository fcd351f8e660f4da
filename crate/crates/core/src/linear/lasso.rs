//! Weighted l1-penalized least squares in Gram form, solved by cyclic coordinate descent.
//!
//! The first step of the penalized invalid-instrument estimators minimizes
//! `0.5 * ||A (Y - Z pi)||^2 + lambda * sum_j w_j |pi_j|` with the projection
//! `A = P_Z - P_{P_Z D}`. Because `A` is idempotent the loss only depends on
//! `G = Z'AZ`, `b = Z'AY` and `c = Y'AY`, all of which follow from cross products.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::CrossProducts;

pub const CD_TOLERANCE: f64 = 1e-9;
pub const CD_MAX_SWEEPS: usize = 10_000;
pub const PATH_LENGTH: usize = 100;
pub const PATH_MIN_RATIO: f64 = 1e-3;
/// Upper bound for adaptive penalty factors.
pub const WEIGHT_CAP: f64 = 1e12;

/// Regularization path: `lambdas` descending, with one `pi_hat`/`beta_hat` per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub pi_hats: Vec<DVector<f64>>,
    pub beta_hats: Vec<f64>,
}

impl LassoPath {
    /// Zero-based indices with `pi_hat_j == 0` at path position `k`.
    pub fn valid_set_at(&self, k: usize) -> Vec<usize> {
        support_complement(&self.pi_hats[k])
    }
}

pub fn support_complement(pi: &DVector<f64>) -> Vec<usize> {
    (0..pi.len()).filter(|&j| pi[j] == 0.0).collect()
}

/// Quadratic first-step problem together with what is needed for the plug-in `beta`.
#[derive(Debug, Clone)]
pub struct PenalizedIvProblem {
    pub gram: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    /// `Z'D`.
    pub zd: DVector<f64>,
    /// `D' P_Z Y`.
    pub d_pz_y: f64,
    /// `||P_Z D||^2`.
    pub d_pz_d: f64,
}

impl PenalizedIvProblem {
    pub fn from_cross(cp: &CrossProducts) -> Result<Self> {
        let chol = linalg::cholesky(&cp.zz, "Z'Z")?;
        let za = chol.solve(&cp.zd);
        let zy_solved = chol.solve(&cp.zy);
        let s = cp.zd.dot(&za);
        if !(s > 0.0) {
            return Err(IvError::RankDeficient("projected exposure is zero".into()));
        }
        let d_pz_y = za.dot(&cp.zy);
        let gram = &cp.zz - &cp.zd * cp.zd.transpose() / s;
        let b = &cp.zy - &cp.zd * (d_pz_y / s);
        let c = cp.zy.dot(&zy_solved) - d_pz_y * d_pz_y / s;
        Ok(Self {
            gram,
            b,
            c,
            zd: cp.zd.clone(),
            d_pz_y,
            d_pz_d: s,
        })
    }

    pub fn p(&self) -> usize {
        self.b.len()
    }

    /// Squared-error part `0.5 * ||A (Y - Z pi)||^2`.
    pub fn loss(&self, pi: &DVector<f64>) -> f64 {
        0.5 * (self.c - 2.0 * self.b.dot(pi) + pi.dot(&(&self.gram * pi)))
    }

    pub fn objective(&self, pi: &DVector<f64>, lambda: f64, weights: &DVector<f64>) -> f64 {
        let pen: f64 = pi.iter().zip(weights.iter()).map(|(x, w)| w * x.abs()).sum();
        self.loss(pi) + lambda * pen
    }

    /// Plug-in `beta = (P_Z D)'(Y - Z pi) / ||P_Z D||^2`.
    pub fn beta_for(&self, pi: &DVector<f64>) -> f64 {
        (self.d_pz_y - self.zd.dot(pi)) / self.d_pz_d
    }

    /// Smallest `lambda` at which `pi = 0` is optimal.
    pub fn lambda_max(&self, weights: &DVector<f64>) -> f64 {
        (0..self.p())
            .map(|j| self.b[j].abs() / weights[j])
            .fold(0.0, f64::max)
    }

    /// Coordinate descent from `warm`; stops when the largest coefficient change in a
    /// sweep is below [`CD_TOLERANCE`] or after [`CD_MAX_SWEEPS`] sweeps.
    pub fn solve(&self, lambda: f64, weights: &DVector<f64>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        if !(lambda > 0.0) {
            return Err(IvError::NonPositiveLambda(lambda));
        }
        let p = self.p();
        let mut pi = warm.cloned().unwrap_or_else(|| DVector::zeros(p));
        // residual correlation r_j = b_j - (G pi)_j
        let mut grad = &self.b - &self.gram * &pi;
        for _ in 0..CD_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                let old = pi[j];
                let new = if gjj > 0.0 {
                    soft_threshold(grad[j] + gjj * old, lambda * weights[j]) / gjj
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    pi[j] = new;
                    for k in 0..p {
                        grad[k] -= self.gram[(k, j)] * delta;
                    }
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < CD_TOLERANCE {
                break;
            }
        }
        Ok(pi)
    }

    /// Log-spaced path of [`PATH_LENGTH`] values from `lambda_max` down to
    /// `PATH_MIN_RATIO * lambda_max`, solved with warm starts.
    pub fn path(&self, weights: &DVector<f64>) -> Result<LassoPath> {
        let lambdas = lambda_grid(self.lambda_max(weights));
        self.path_on(&lambdas, weights)
    }

    pub fn path_on(&self, lambdas: &[f64], weights: &DVector<f64>) -> Result<LassoPath> {
        let mut pi = DVector::zeros(self.p());
        let mut pi_hats = Vec::with_capacity(lambdas.len());
        let mut beta_hats = Vec::with_capacity(lambdas.len());
        for &lam in lambdas {
            pi = self.solve(lam, weights, Some(&pi))?;
            beta_hats.push(self.beta_for(&pi));
            pi_hats.push(pi.clone());
        }
        Ok(LassoPath {
            lambdas: lambdas.to_vec(),
            pi_hats,
            beta_hats,
        })
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    let top = if lambda_max > 0.0 { lambda_max } else { f64::MIN_POSITIVE.sqrt() };
    let lo = (top * PATH_MIN_RATIO).ln();
    let hi = top.ln();
    (0..PATH_LENGTH)
        .map(|k| {
            if k == 0 {
                top
            } else {
                (hi + (lo - hi) * k as f64 / (PATH_LENGTH - 1) as f64).exp()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(gram: DMatrix<f64>, b: DVector<f64>) -> PenalizedIvProblem {
        let p = b.len();
        PenalizedIvProblem { gram, b, c: 10.0, zd: DVector::from_element(p, 1.0), d_pz_y: 1.0, d_pz_d: 1.0 }
    }

    #[test]
    fn orthogonal_design_is_soft_thresholding() {
        let pr = problem(DMatrix::identity(3, 3) * 2.0, DVector::from_vec(vec![3.0, -1.0, 0.2]));
        let w = DVector::from_element(3, 1.0);
        let pi = pr.solve(0.5, &w, None).unwrap();
        assert!((pi[0] - 1.25).abs() < 1e-12);
        assert!((pi[1] + 0.25).abs() < 1e-12);
        assert_eq!(pi[2], 0.0);
    }

    #[test]
    fn zero_at_lambda_max() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let pr = problem(g, DVector::from_vec(vec![1.0, -3.0]));
        let w = DVector::from_vec(vec![1.0, 2.0]);
        let path = pr.path(&w).unwrap();
        assert!(path.pi_hats[0].iter().all(|&x| x == 0.0));
        assert!(path.lambdas.windows(2).all(|p| p[0] > p[1]));
        assert!((path.lambdas[99] / path.lambdas[0] - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let pr = problem(DMatrix::identity(1, 1), DVector::from_vec(vec![1.0]));
        assert!(matches!(pr.solve(0.0, &DVector::from_element(1, 1.0), None), Err(IvError::NonPositiveLambda(_))));
    }

    proptest! {
        // KKT conditions hold at the coordinate-descent solution.
        #[test]
        fn kkt_conditions(entries in prop::collection::vec(-1.0f64..1.0, 12), bv in prop::collection::vec(-3.0f64..3.0, 3), lam in 0.05f64..2.0) {
            let a = DMatrix::from_row_slice(4, 3, &entries);
            let gram = a.tr_mul(&a) + DMatrix::identity(3, 3) * 0.1;
            let pr = problem(gram.clone(), DVector::from_vec(bv));
            let w = DVector::from_element(3, 1.0);
            let pi = pr.solve(lam, &w, None).unwrap();
            let g = &pr.b - &gram * &pi;
            for j in 0..3 {
                if pi[j] != 0.0 {
                    prop_assert!((g[j] - lam * pi[j].signum()).abs() < 1e-6);
                } else {
                    prop_assert!(g[j].abs() <= lam + 1e-6);
                }
            }
        }
    }
}
