//! Two-stage least squares with a designated valid set, computed from cross products.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{complement, normalize_set, CovMode, CrossProducts, IVDataset};

/// Cross products plus a factorization of `Z'Z`, reused across many valid sets.
pub struct IvContext {
    pub cp: CrossProducts,
    pub zz_chol: Cholesky<f64, Dyn>,
}

impl IvContext {
    pub fn new(data: &IVDataset) -> Result<Self> {
        Self::from_cross(CrossProducts::from_dataset(data))
    }

    pub fn from_cross(cp: CrossProducts) -> Result<Self> {
        let zz_chol = linalg::cholesky(&cp.zz, "Z'Z")?;
        Ok(Self { cp, zz_chol })
    }

    pub fn p(&self) -> usize {
        self.cp.p()
    }

    /// `D' P_Z D`.
    pub fn d_pz_d(&self) -> f64 {
        self.cp.zd.dot(&self.zz_chol.solve(&self.cp.zd))
    }

    pub fn tsls(&self, valid: &[usize]) -> Result<TslsFit> {
        let cp = &self.cp;
        let p = cp.p();
        let valid = normalize_set(valid);
        if valid.is_empty() {
            return Err(IvError::EmptyValidSet);
        }
        if valid.iter().any(|&j| j >= p) {
            return Err(IvError::InvalidArgument(format!("valid set index out of range 0..{p}")));
        }
        let invalid = complement(&valid, p);
        let za = self.zz_chol.solve(&cp.zd);
        let d_pz_d = cp.zd.dot(&za);
        let d_pz_y = cp.zy.dot(&za);

        let (d_pw_d, d_pw_y, aw, zz_ww) = if invalid.is_empty() {
            (0.0, 0.0, DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let zz_ww = linalg::select_block(&cp.zz, &invalid, &invalid);
            let zd_w = linalg::select_entries(&cp.zd, &invalid);
            let zy_w = linalg::select_entries(&cp.zy, &invalid);
            let aw = linalg::cholesky(&zz_ww, "Z_W'Z_W")?.solve(&zd_w);
            (zd_w.dot(&aw), zy_w.dot(&aw), aw, zz_ww)
        };
        let strength = d_pz_d - d_pw_d;
        if !(strength > 1e-12 * d_pz_d.abs().max(f64::MIN_POSITIVE)) {
            return Err(IvError::RankDeficient(
                "projected exposure is collinear with the invalid instruments".into(),
            ));
        }
        let beta = (d_pz_y - d_pw_y) / strength;

        let mut pi_full = DVector::zeros(p);
        if !invalid.is_empty() {
            let zd_w = linalg::select_entries(&cp.zd, &invalid);
            let zy_w = linalg::select_entries(&cp.zy, &invalid);
            let pi_w = linalg::cholesky(&zz_ww, "Z_W'Z_W")?.solve(&(zy_w - zd_w * beta));
            for (k, &j) in invalid.iter().enumerate() {
                pi_full[j] = pi_w[k];
            }
        }
        // u = Y - D beta - Z pi
        let zpi = &cp.zz * &pi_full;
        let rss = cp.yy - 2.0 * beta * cp.dy - 2.0 * pi_full.dot(&cp.zy)
            + beta * beta * cp.dd
            + 2.0 * beta * pi_full.dot(&cp.zd)
            + pi_full.dot(&zpi);
        let zu = &cp.zy - &cp.zd * beta - zpi;

        let mut weights = za;
        for (k, &j) in invalid.iter().enumerate() {
            weights[j] -= aw[k];
        }
        Ok(TslsFit {
            beta,
            pi: pi_full,
            valid,
            invalid,
            strength,
            rss: rss.max(0.0),
            zu,
            weights,
            n: cp.n,
        })
    }

    /// Sargan overidentification statistic `n * u'P_Z u / u'u` for a fitted valid set.
    pub fn sargan(&self, fit: &TslsFit) -> f64 {
        let upu = fit.zu.dot(&self.zz_chol.solve(&fit.zu)).max(0.0);
        let scale = self.cp.yy.max(self.cp.dd).max(1.0);
        if fit.rss <= 1e-24 * scale {
            return 0.0;
        }
        fit.n as f64 * upu / fit.rss
    }
}

/// Result of [`IvContext::tsls`].
#[derive(Debug, Clone)]
pub struct TslsFit {
    pub beta: f64,
    /// Direct-effect estimates, zero on the valid set.
    pub pi: DVector<f64>,
    pub valid: Vec<usize>,
    pub invalid: Vec<usize>,
    /// `D'(P_Z - P_W) D`.
    pub strength: f64,
    /// Residual sum of squares of `Y - D beta - Z pi`.
    pub rss: f64,
    /// `Z'u`.
    pub zu: DVector<f64>,
    /// Coefficients `c` such that the effective instrument is `Z c = (P_Z - P_W) D`.
    pub weights: DVector<f64>,
    pub n: usize,
}

impl TslsFit {
    pub fn se(&self, data: &IVDataset, mode: CovMode) -> f64 {
        match mode {
            CovMode::Homoskedastic => (self.rss / self.n as f64 / self.strength).sqrt(),
            CovMode::Robust => {
                let z = data.instruments();
                let xt = z * &self.weights;
                let u = data.outcome() - data.exposure() * self.beta - z * &self.pi;
                let meat: f64 = xt.iter().zip(u.iter()).map(|(x, e)| x * x * e * e).sum();
                meat.sqrt() / self.strength
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::IVDataset;

    fn data() -> IVDataset {
        let n = 40;
        let z = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 2)) as f64 * 0.37).sin() + 0.1 * j as f64);
        let d = DVector::from_fn(n, |i, _| z[(i, 0)] + 0.5 * z[(i, 1)] - z[(i, 2)] + ((i as f64) * 1.3).cos());
        let y = DVector::from_fn(n, |i, _| 2.0 * d[i] + 0.8 * z[(i, 2)] + ((i as f64) * 0.7).sin());
        IVDataset::centered_from(y, d, z).unwrap()
    }

    #[test]
    fn matches_explicit_second_stage_regression() {
        let ds = data();
        let ctx = IvContext::new(&ds).unwrap();
        let fit = ctx.tsls(&[0, 1]).unwrap();
        // explicit: regress Y on [P_Z D, Z_3]
        let z = ds.instruments();
        let pzd = z * linalg::ols(z, ds.exposure()).unwrap();
        let mut x = DMatrix::zeros(ds.n(), 2);
        x.set_column(0, &pzd);
        x.set_column(1, &z.column(2));
        let coef = linalg::ols(&x, ds.outcome()).unwrap();
        assert!((fit.beta - coef[0]).abs() < 1e-10);
        assert!((fit.pi[2] - coef[1]).abs() < 1e-10);
        let u = ds.outcome() - ds.exposure() * fit.beta - z * &fit.pi;
        assert!((u.norm_squared() - fit.rss).abs() < 1e-8 * fit.rss.max(1.0));
        assert!((z.tr_mul(&u) - &fit.zu).amax() < 1e-9);
    }
}
