use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::linalg;

/// Individual-level data: outcome `Y`, exposure `D`, instruments `Z` and optional covariates `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IVDataset {
    outcome: DVector<f64>,
    exposure: DVector<f64>,
    instruments: DMatrix<f64>,
    covariates: Option<DMatrix<f64>>,
    centered: bool,
}

impl IVDataset {
    /// Builds a raw (uncentered) dataset after checking dimensions.
    pub fn new(
        outcome: DVector<f64>,
        exposure: DVector<f64>,
        instruments: DMatrix<f64>,
        covariates: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = outcome.len();
        if exposure.len() != n || instruments.nrows() != n {
            return Err(IvError::DimensionMismatch(format!(
                "outcome has {n} rows, exposure {}, instruments {}",
                exposure.len(),
                instruments.nrows()
            )));
        }
        if let Some(x) = &covariates {
            if x.nrows() != n {
                return Err(IvError::DimensionMismatch(format!(
                    "covariates have {} rows, expected {n}",
                    x.nrows()
                )));
            }
        }
        let p = instruments.ncols();
        if p == 0 {
            return Err(IvError::DimensionMismatch("no instruments".into()));
        }
        if n < p + 2 {
            return Err(IvError::TooFewObservations { n, needed: p + 2 });
        }
        let covariates = covariates.filter(|x| x.ncols() > 0);
        Ok(Self {
            outcome,
            exposure,
            instruments,
            covariates,
            centered: false,
        })
    }

    /// Builds, centers and rank-checks in one step.
    pub fn centered_from(
        outcome: DVector<f64>,
        exposure: DVector<f64>,
        instruments: DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(outcome, exposure, instruments, None)?.center_and_validate()
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn p(&self) -> usize {
        self.instruments.ncols()
    }

    pub fn outcome(&self) -> &DVector<f64> {
        &self.outcome
    }

    pub fn exposure(&self) -> &DVector<f64> {
        &self.exposure
    }

    pub fn instruments(&self) -> &DMatrix<f64> {
        &self.instruments
    }

    pub fn covariates(&self) -> Option<&DMatrix<f64>> {
        self.covariates.as_ref()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Subtracts column means from outcome, exposure, instruments (and covariates),
    /// then checks that the instrument matrix has full column rank.
    pub fn center_and_validate(&self) -> Result<Self> {
        let instruments = linalg::center_columns(&self.instruments);
        linalg::ensure_full_column_rank(&instruments, "instrument matrix")?;
        Ok(Self {
            outcome: linalg::center_vector(&self.outcome),
            exposure: linalg::center_vector(&self.exposure),
            instruments,
            covariates: self.covariates.as_ref().map(linalg::center_columns),
            centered: true,
        })
    }

    /// Replaces outcome, exposure and instruments with their residuals from a least
    /// squares fit on the covariates (Frisch-Waugh-Lovell), dropping the covariates.
    pub fn residualize_covariates(&self) -> Result<Self> {
        let Some(x) = &self.covariates else {
            return Ok(self.clone());
        };
        linalg::ensure_full_column_rank(x, "covariate matrix")?;
        let chol = linalg::cholesky(&x.tr_mul(x), "covariate matrix")?;
        let resid = |v: &DMatrix<f64>| -> DMatrix<f64> {
            let coef = chol.solve(&x.tr_mul(v));
            v - x * coef
        };
        let y = resid(&DMatrix::from_column_slice(self.n(), 1, self.outcome.as_slice()));
        let d = resid(&DMatrix::from_column_slice(self.n(), 1, self.exposure.as_slice()));
        Ok(Self {
            outcome: y.column(0).into_owned(),
            exposure: d.column(0).into_owned(),
            instruments: resid(&self.instruments),
            covariates: None,
            centered: self.centered,
        })
    }

    /// Rows selected by index, in the given order. The result is marked uncentered.
    pub fn subset_rows(&self, rows: &[usize]) -> Self {
        Self {
            outcome: linalg::select_entries(&self.outcome, rows),
            exposure: linalg::select_entries(&self.exposure, rows),
            instruments: self.instruments.select_rows(rows.iter()),
            covariates: self.covariates.as_ref().map(|x| x.select_rows(rows.iter())),
            centered: false,
        }
    }

    /// Copy with the outcome replaced.
    pub fn with_outcome(&self, outcome: DVector<f64>) -> Result<Self> {
        if outcome.len() != self.n() {
            return Err(IvError::DimensionMismatch("outcome length".into()));
        }
        Ok(Self {
            outcome,
            ..self.clone()
        })
    }

    /// Copy with the instrument matrix replaced (same row count).
    pub fn with_instruments(&self, instruments: DMatrix<f64>) -> Result<Self> {
        if instruments.nrows() != self.n() {
            return Err(IvError::DimensionMismatch("instrument rows".into()));
        }
        Ok(Self {
            instruments,
            ..self.clone()
        })
    }

    /// Overall first-stage F statistic for the joint significance of all instruments
    /// in the regression of the exposure on the instruments (with intercept).
    pub fn first_stage_f(&self) -> Result<f64> {
        let z = linalg::center_columns(&self.instruments);
        let d = linalg::center_vector(&self.exposure);
        let coef = linalg::ols(&z, &d)?;
        let fitted = &z * coef;
        let ssr_model = fitted.norm_squared();
        let resid = &d - fitted;
        let ssr = resid.norm_squared();
        let p = self.p() as f64;
        let df2 = self.n() as f64 - p - 1.0;
        if ssr <= 0.0 {
            return Ok(f64::INFINITY);
        }
        Ok((ssr_model / p) / (ssr / df2))
    }
}
