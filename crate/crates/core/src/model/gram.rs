use nalgebra::{DMatrix, DVector};

use super::dataset::IVDataset;

/// Sufficient cross products of `(Y, D, Z)` for every linear IV computation that does
/// not need per-observation residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossProducts {
    pub n: usize,
    pub zz: DMatrix<f64>,
    pub zd: DVector<f64>,
    pub zy: DVector<f64>,
    pub dd: f64,
    pub dy: f64,
    pub yy: f64,
}

impl CrossProducts {
    pub fn from_dataset(data: &IVDataset) -> Self {
        let z = data.instruments();
        let y = data.outcome();
        let d = data.exposure();
        Self {
            n: data.n(),
            zz: z.tr_mul(z),
            zd: z.tr_mul(d),
            zy: z.tr_mul(y),
            dd: d.dot(d),
            dy: d.dot(y),
            yy: y.dot(y),
        }
    }

    /// Cross products restricted to the listed rows.
    pub fn from_rows(data: &IVDataset, rows: &[usize]) -> Self {
        let p = data.p();
        let z = data.instruments();
        let y = data.outcome();
        let d = data.exposure();
        let mut out = Self {
            n: rows.len(),
            zz: DMatrix::zeros(p, p),
            zd: DVector::zeros(p),
            zy: DVector::zeros(p),
            dd: 0.0,
            dy: 0.0,
            yy: 0.0,
        };
        for &i in rows {
            let zi = z.row(i).transpose();
            out.zz += &zi * zi.transpose();
            out.zd += &zi * d[i];
            out.zy += &zi * y[i];
            out.dd += d[i] * d[i];
            out.dy += d[i] * y[i];
            out.yy += y[i] * y[i];
        }
        out
    }

    /// `self - other`, e.g. full-sample minus one cross-validation fold.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            n: self.n - other.n,
            zz: &self.zz - &other.zz,
            zd: &self.zd - &other.zd,
            zy: &self.zy - &other.zy,
            dd: self.dd - other.dd,
            dy: self.dy - other.dy,
            yy: self.yy - other.yy,
        }
    }

    pub fn p(&self) -> usize {
        self.zd.len()
    }
}
