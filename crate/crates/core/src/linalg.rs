//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{IvError, Result};

/// Singular values below `RANK_TOL * largest` mark a matrix as rank deficient.
pub const RANK_TOL: f64 = 1e-8;

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

pub fn center_vector(v: &DVector<f64>) -> DVector<f64> {
    let m = v.mean();
    v.add_scalar(-m)
}

/// Singular values of a tall matrix, computed from the R factor of its QR decomposition.
pub fn singular_values(x: &DMatrix<f64>) -> DVector<f64> {
    if x.ncols() == 0 {
        return DVector::zeros(0);
    }
    let r = if x.nrows() > x.ncols() {
        x.clone().qr().r()
    } else {
        x.clone()
    };
    r.singular_values()
}

/// Errors with `RankDeficient` unless the smallest singular value exceeds
/// `RANK_TOL` times the largest.
pub fn ensure_full_column_rank(x: &DMatrix<f64>, what: &str) -> Result<()> {
    if x.nrows() < x.ncols() {
        return Err(IvError::RankDeficient(format!(
            "{what}: {} rows < {} columns",
            x.nrows(),
            x.ncols()
        )));
    }
    let sv = singular_values(x);
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min < RANK_TOL * max {
        return Err(IvError::RankDeficient(format!(
            "{what}: smallest singular value {min:.3e}, largest {max:.3e}"
        )));
    }
    Ok(())
}

/// Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone())
        .ok_or_else(|| IvError::RankDeficient(format!("{what}: matrix is not positive definite")))
}

pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(cholesky(a, what)?.inverse())
}

/// Least squares coefficients of `y` on the columns of `x`.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    Ok(cholesky(&xtx, "ols design")?.solve(&xty))
}

/// Least squares fit of every column of `ys` on `x`; returns the coefficient matrix.
pub fn ols_multi(x: &DMatrix<f64>, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(ys);
    Ok(cholesky(&xtx, "ols design")?.solve(&xty))
}

/// Select a subset of columns.
pub fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    x.select_columns(cols.iter())
}

/// Select a principal submatrix.
pub fn select_block(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Orthonormal basis of the column space of `x` (columns with eigenvalue of `x'x`
/// below `tol * max` are dropped).
pub fn orthonormal_basis(x: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let xtx = x.tr_mul(x);
    let eig = nalgebra::SymmetricEigen::new(xtx);
    let max = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&k| eig.eigenvalues[k] > tol * max && eig.eigenvalues[k] > 0.0)
        .collect();
    let mut basis = DMatrix::zeros(x.nrows(), keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let col = x * v / eig.eigenvalues[k].sqrt();
        basis.set_column(c, &col);
    }
    if basis.ncols() == 0 || basis.nrows() < basis.ncols() {
        return basis;
    }
    // one QR pass restores orthonormality lost to the conditioning of x'x
    basis.qr().q()
}

/// Symmetric square root inverse `A^{-1/2}` of a positive definite matrix.
pub fn inv_sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(IvError::RankDeficient("matrix is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Lower-triangular factor `L` with `L L' = a` for a positive semidefinite matrix;
/// negative eigenvalues from rounding are clipped to zero.
pub fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        return ch.l();
    }
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d
}
