use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::weak_iv::WeakIvStats;
use crate::error::{IvError, Result};
use crate::linalg;
use crate::linear::iv_core::IvContext;
use crate::linear::tsls::require_centered;
use crate::model::{complement, CovMode, IVDataset, IntervalUnion};
use crate::stats;

pub const SUBSET_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    Wald,
    AndersonRubin,
    Clr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnionOptions {
    pub v: usize,
    pub alpha_s: f64,
    pub alpha_t: f64,
    pub inner: InnerMethod,
    pub cov_mode: CovMode,
}

impl UnionOptions {
    pub fn new(v: usize) -> Self {
        Self { v, alpha_s: 0.01, alpha_t: 0.04, inner: InnerMethod::Clr, cov_mode: CovMode::Robust }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnionCi {
    pub ci: IntervalUnion,
    pub subsets: usize,
    /// Subsets passing the J screen.
    pub kept: usize,
    /// Set when no subset survived: evidence against `|V| >= v`.
    pub empty: bool,
    /// Some inner CLR set reached its search-grid edge and was extended to infinity.
    pub grid_truncated: bool,
}

pub fn binomial(p: usize, v: usize) -> f64 {
    if v > p {
        return 0.0;
    }
    let v = v.min(p - v);
    (0..v).fold(1.0, |acc, i| acc * (p - i) as f64 / (i + 1) as f64)
}

/// All `v`-subsets of `0..p` in lexicographic order.
pub fn combinations(p: usize, v: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if v == 0 || v > p {
        return out;
    }
    let mut idx: Vec<usize> = (0..v).collect();
    loop {
        out.push(idx.clone());
        let mut i = v;
        while i > 0 && idx[i - 1] == p - v + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for k in i..v {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

pub fn union_ci(data: &IVDataset, v: usize, alpha_s: f64, alpha_t: f64, inner: InnerMethod) -> Result<UnionCi> {
    union_ci_with(data, &UnionOptions { v, alpha_s, alpha_t, inner, cov_mode: CovMode::Robust })
}

/// Union over all `v`-subsets passing the J screen at level `alpha_s` of the `1 - alpha_t`
/// confidence sets that treat the subset as valid and the rest as controls.
pub fn union_ci_with(data: &IVDataset, opts: &UnionOptions) -> Result<UnionCi> {
    require_centered(data)?;
    let p = data.p();
    if opts.v == 0 || opts.v > p {
        return Err(IvError::InvalidArgument(format!("v must lie in 1..={p}, got {}", opts.v)));
    }
    let total = opts.alpha_s + opts.alpha_t;
    if !(opts.alpha_s > 0.0 && opts.alpha_t > 0.0 && total < 1.0) {
        return Err(IvError::InvalidAlphas(total));
    }
    let count = binomial(p, opts.v);
    if count > SUBSET_LIMIT {
        return Err(IvError::CombinatorialLimit { count, limit: SUBSET_LIMIT });
    }
    let ctx = IvContext::new(data)?;
    let subsets = combinations(p, opts.v);
    let j_crit = if opts.v >= 2 { stats::chi2_quantile((opts.v - 1) as f64, 1.0 - opts.alpha_s) } else { f64::INFINITY };
    let pz = projected_ybar(&ctx, &(0..p).collect::<Vec<_>>())?;
    let dof = (data.n() - p - 1) as f64;
    let omega = (ybar_gram(&ctx) - pz) / dof;

    let pieces: Vec<Option<(IntervalUnion, bool)>> = subsets
        .par_iter()
        .map(|set| -> Result<Option<(IntervalUnion, bool)>> {
            let fit = ctx.tsls(set)?;
            if opts.v >= 2 && ctx.sargan(&fit) > j_crit {
                return Ok(None);
            }
            let piece = match opts.inner {
                InnerMethod::Wald => {
                    let z = stats::z_two_sided(opts.alpha_t);
                    let se = fit.se(data, opts.cov_mode);
                    (IntervalUnion::single(fit.beta - z * se, fit.beta + z * se), false)
                }
                InnerMethod::AndersonRubin | InnerMethod::Clr => {
                    let w = complement(set, p);
                    let m = pz - projected_ybar(&ctx, &w)?;
                    let st = WeakIvStats { m, omega, k: opts.v, dof };
                    if opts.inner == InnerMethod::AndersonRubin {
                        (st.ar_set(opts.alpha_t), false)
                    } else {
                        st.clr_set(opts.alpha_t)
                    }
                }
            };
            Ok(Some(piece))
        })
        .collect::<Result<_>>()?;

    let mut ci = IntervalUnion::empty();
    let mut kept = 0;
    let mut grid_truncated = false;
    for (set_ci, trunc) in pieces.into_iter().flatten() {
        kept += 1;
        grid_truncated |= trunc;
        ci = ci.union(&set_ci);
    }
    Ok(UnionCi { ci, subsets: subsets.len(), kept, empty: kept == 0, grid_truncated })
}

/// `[Y, D]' P_S [Y, D]` for the instrument columns `S`.
fn projected_ybar(ctx: &IvContext, cols: &[usize]) -> Result<Matrix2<f64>> {
    if cols.is_empty() {
        return Ok(Matrix2::zeros());
    }
    let cp = &ctx.cp;
    let zz = linalg::select_block(&cp.zz, cols, cols);
    let zy = linalg::select_entries(&cp.zy, cols);
    let zd = linalg::select_entries(&cp.zd, cols);
    let chol = linalg::cholesky(&zz, "instrument block")?;
    let ay = chol.solve(&zy);
    let ad = chol.solve(&zd);
    let yy = zy.dot(&ay);
    let yd = zy.dot(&ad);
    let dd = zd.dot(&ad);
    Ok(Matrix2::new(yy, yd, yd, dd))
}

fn ybar_gram(ctx: &IvContext) -> Matrix2<f64> {
    let cp = &ctx.cp;
    Matrix2::new(cp.yy, cp.dy, cp.dy, cp.dd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::tsls;
    use nalgebra::{DMatrix, DVector};

    fn data() -> IVDataset {
        let n = 200;
        let z = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 2) + 5 * j) as f64 * 0.377).sin());
        let d = DVector::from_fn(n, |i, _| z.row(i).sum() + 0.5 * ((i as f64) * 1.37).cos());
        let y = DVector::from_fn(n, |i, _| 0.8 * d[i] + 0.3 * ((i as f64) * 2.11).sin() + 0.2 * ((i as f64) * 0.83).cos() * d[i].signum());
        IVDataset::centered_from(y, d, z).unwrap()
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(binomial(10, 6), 210.0);
    }

    #[test]
    fn full_set_equals_inner_wald() {
        let ds = data();
        let u = union_ci(&ds, 3, 0.5, 0.05, InnerMethod::Wald).unwrap();
        let t = tsls::tsls_with_alpha(&ds, &[0, 1, 2], CovMode::Robust, 0.05).unwrap();
        if u.kept == 1 {
            assert_eq!(u.ci, t.ci.unwrap());
        } else {
            assert!(u.empty && u.ci.is_empty());
        }
    }

    #[test]
    fn j_rejection_gives_empty_set() {
        let n = 300;
        let z = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 2) + 5 * j) as f64 * 0.377).sin());
        let d = DVector::from_fn(n, |i, _| z.row(i).sum() + 0.5 * ((i as f64) * 1.37).cos());
        // every pair contains an instrument with a distinct direct effect
        let y = DVector::from_fn(n, |i, _| d[i] + 3.0 * z[(i, 0)] - 4.0 * z[(i, 1)] + 0.01 * ((i as f64) * 2.11).sin());
        let ds = IVDataset::centered_from(y, d, z).unwrap();
        let u = union_ci(&ds, 2, 0.01, 0.04, InnerMethod::Wald).unwrap();
        assert!(u.empty);
        assert!(u.ci.is_empty());
    }

    #[test]
    fn argument_checks() {
        let ds = data();
        assert_eq!(union_ci(&ds, 2, 0.5, 0.5, InnerMethod::Wald).unwrap_err(), IvError::InvalidAlphas(1.0));
        assert!(union_ci(&ds, 4, 0.01, 0.04, InnerMethod::Wald).is_err());
    }

    #[test]
    fn monotone_in_alpha_t() {
        let ds = data();
        for inner in [InnerMethod::Wald, InnerMethod::AndersonRubin, InnerMethod::Clr] {
            let wide = union_ci(&ds, 2, 0.01, 0.02, inner).unwrap();
            let narrow = union_ci(&ds, 2, 0.01, 0.10, inner).unwrap();
            assert!(narrow.ci.is_subset_of(&wide.ci), "{inner:?}");
        }
    }

    #[test]
    fn anderson_rubin_single_instrument_matches_f_test() {
        // v = 1, one valid instrument with the others as controls
        let ds = data();
        let u = union_ci(&ds, 1, 0.01, 0.05, InnerMethod::AndersonRubin).unwrap();
        assert_eq!(u.kept, 3);
        assert!(u.ci.contains(0.8));
    }
}
