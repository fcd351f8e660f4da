//! Estimation from higher-order interactions of mutually independent instruments.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{EstimateReport, IVDataset};
use crate::uniform::union::{binomial, combinations};
use crate::DEFAULT_ALPHA;

pub const BASIS_LIMIT: f64 = 1e5;
pub const MIN_INTERACTION_F: f64 = 4.0;
pub const DEPENDENCE_WARNING: f64 = 0.2;
const CHUNK: usize = 4096;

/// Centered-product instruments `prod_{k in C} (Z_k - mean Z_k)` over every subset `C` of
/// size `p - j`, `j = 0..v-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionBasis {
    pub v: usize,
    pub columns: DMatrix<f64>,
    pub subset_index: Vec<Vec<usize>>,
    pub d: usize,
}

/// Basis dimension `sum_{j<v} C(p, j)`.
pub fn basis_dimension(p: usize, v: usize) -> f64 {
    (0..v).map(|j| binomial(p, j)).sum()
}

/// Generating subsets in order of decreasing size, lexicographic within a size.
pub fn interaction_subsets(p: usize, v: usize) -> Result<Vec<Vec<usize>>> {
    if v == 0 || v > p {
        return Err(IvError::InvalidArgument(format!("v must lie in 1..={p}, got {v}")));
    }
    let d = basis_dimension(p, v);
    if d > BASIS_LIMIT {
        return Err(IvError::CombinatorialLimit { count: d, limit: BASIS_LIMIT });
    }
    Ok((0..v).flat_map(|j| combinations(p, p - j)).collect())
}

pub fn build_interaction_basis(data: &IVDataset, v: usize) -> Result<InteractionBasis> {
    let subsets = interaction_subsets(data.p(), v)?;
    let x = linalg::center_columns(data.instruments());
    let mut columns = DMatrix::from_element(data.n(), subsets.len(), 1.0);
    for (c, set) in subsets.iter().enumerate() {
        for &k in set {
            for i in 0..data.n() {
                columns[(i, c)] *= x[(i, k)];
            }
        }
    }
    Ok(InteractionBasis { v, d: subsets.len(), columns, subset_index: subsets })
}

/// Product over the subset and the leave-one-out products for each member.
fn products(x: &[f64], set: &[usize], loo: &mut Vec<f64>) -> f64 {
    let m = set.len();
    loo.clear();
    loo.resize(m, 1.0);
    let mut prefix = 1.0;
    for (t, &k) in set.iter().enumerate() {
        loo[t] = prefix;
        prefix *= x[k];
    }
    let mut suffix = 1.0;
    for t in (0..m).rev() {
        loo[t] *= suffix;
        suffix *= x[set[t]];
    }
    prefix
}

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
    hd: Vec<f64>,
    hy: Vec<f64>,
}

impl Moments {
    fn zeros(d: usize) -> Self {
        Self { sum: vec![0.0; d], sq: vec![0.0; d], hd: vec![0.0; d], hy: vec![0.0; d] }
    }

    fn add(&mut self, o: &Self) {
        for c in 0..self.sum.len() {
            self.sum[c] += o.sum[c];
            self.sq[c] += o.sq[c];
            self.hd[c] += o.hd[c];
            self.hy[c] += o.hy[c];
        }
    }
}

fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(CHUNK).map(|s| (s, (s + CHUNK).min(n))).collect()
}

pub fn g_interaction(data: &IVDataset, v: usize) -> Result<EstimateReport> {
    g_interaction_with(data, v, DEFAULT_ALPHA)
}

/// GMM over the interaction moments `E[h(Z)(Y - b D)] = 0`, each moment scaled by its
/// sample variance, with a sandwich standard error that accounts for the estimated means.
pub fn g_interaction_with(data: &IVDataset, v: usize, alpha: f64) -> Result<EstimateReport> {
    let subsets = interaction_subsets(data.p(), v)?;
    let d_dim = subsets.len();
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let mu = linalg::column_means(data.instruments());
    let z = data.instruments();
    let (y, dx) = (data.outcome(), data.exposure());
    let row = |i: usize| -> Vec<f64> { (0..p).map(|k| z[(i, k)] - mu[k]).collect() };
    let ranges = chunks(n);

    let parts: Vec<Moments> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let mut m = Moments::zeros(d_dim);
            let mut loo = Vec::new();
            for i in s..e {
                let x = row(i);
                for (c, set) in subsets.iter().enumerate() {
                    let h = products(&x, set, &mut loo);
                    m.sum[c] += h;
                    m.sq[c] += h * h;
                    m.hd[c] += h * dx[i];
                    m.hy[c] += h * y[i];
                }
            }
            m
        })
        .collect();
    let mut mom = Moments::zeros(d_dim);
    for part in &parts {
        mom.add(part);
    }

    let mut weights = vec![0.0; d_dim];
    for c in 0..d_dim {
        let var = mom.sq[c] / nf - (mom.sum[c] / nf).powi(2);
        if !(var > 0.0) {
            return Err(IvError::RankDeficient(format!("interaction column {:?} is constant", subsets[c])));
        }
        weights[c] = 1.0 / var;
    }

    // first-stage F for the basis, treating the columns as mutually orthogonal
    let d_mean = dx.mean();
    let dd = dx.iter().map(|v| (v - d_mean).powi(2)).sum::<f64>();
    let explained: f64 = (0..d_dim)
        .map(|c| {
            let cov = mom.hd[c] - mom.sum[c] * d_mean;
            let hh = mom.sq[c] - mom.sum[c] * mom.sum[c] / nf;
            cov * cov / hh
        })
        .sum::<f64>()
        .min(dd);
    let dof = nf - d_dim as f64 - 1.0;
    if dof < 1.0 {
        return Err(IvError::TooFewObservations { n, needed: d_dim + 2 });
    }
    let f_stat = (explained / d_dim as f64) / ((dd - explained).max(f64::MIN_POSITIVE) / dof);
    if !(f_stat >= MIN_INTERACTION_F) {
        return Err(IvError::WeakInteractionInstrument(f_stat));
    }

    let a: Vec<f64> = mom.hd.iter().map(|v| v / nf).collect();
    let b: Vec<f64> = mom.hy.iter().map(|v| v / nf).collect();
    let c: Vec<f64> = (0..d_dim).map(|k| weights[k] * a[k]).collect();
    let denom: f64 = (0..d_dim).map(|k| c[k] * a[k]).sum();
    let beta = (0..d_dim).map(|k| c[k] * b[k]).sum::<f64>() / denom;

    // influence of the estimated instrument means
    let grads: Vec<(Vec<f64>, Vec<f64>)> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let mut g = vec![0.0; p];
            let mut psi = Vec::with_capacity(e - s);
            let mut loo = Vec::new();
            for i in s..e {
                let x = row(i);
                let u = y[i] - beta * dx[i];
                let mut s_i = 0.0;
                for (k, set) in subsets.iter().enumerate() {
                    s_i += c[k] * products(&x, set, &mut loo);
                    for (t, &m) in set.iter().enumerate() {
                        g[m] -= u * c[k] * loo[t];
                    }
                }
                psi.push(s_i * u);
            }
            (g, psi)
        })
        .collect();
    let mut g_mu = vec![0.0; p];
    for (g, _) in &grads {
        for k in 0..p {
            g_mu[k] += g[k];
        }
    }
    g_mu.iter_mut().for_each(|v| *v /= nf);
    let mut ss = 0.0;
    for (&(s, _), (_, psi)) in ranges.iter().zip(&grads) {
        for (r, &ps) in psi.iter().enumerate() {
            let x = row(s + r);
            let infl = ps + (0..p).map(|k| g_mu[k] * x[k]).sum::<f64>();
            ss += infl * infl;
        }
    }
    let se = ss.sqrt() / (nf * denom.abs());

    let mut report = EstimateReport::wald("g-interaction", beta, se, alpha)
        .diag("v", v)
        .diag("basis_dimension", d_dim)
        .diag("interaction_f", f_stat);
    let corr = max_abs_correlation(z);
    report.set_diag("max_instrument_correlation", corr);
    if corr > DEPENDENCE_WARNING {
        report.warn(format!(
            "DependentInstruments: largest pairwise instrument correlation {corr:.3} exceeds {DEPENDENCE_WARNING}"
        ));
    }
    Ok(report)
}

fn max_abs_correlation(z: &DMatrix<f64>) -> f64 {
    let x = linalg::center_columns(z);
    let g = x.tr_mul(&x);
    let mut best: f64 = 0.0;
    for j in 0..g.nrows() {
        for k in j + 1..g.nrows() {
            let den = (g[(j, j)] * g[(k, k)]).sqrt();
            if den > 0.0 {
                best = best.max((g[(j, k)] / den).abs());
            }
        }
    }
    best
}

/// Empirical moment vector `H'(Y - b D) / n`.
pub fn interaction_moments(basis: &InteractionBasis, data: &IVDataset, b: f64) -> DVector<f64> {
    let u = data.outcome() - data.exposure() * b;
    basis.columns.tr_mul(&u) / data.n() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(n: usize, p: usize, seed: u64, interaction: f64) -> IVDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let z = DMatrix::from_fn(n, p, |_, _| g() + 1.0);
        let e0: Vec<f64> = (0..n).map(|_| g()).collect();
        let e1: Vec<f64> = (0..n).map(|_| g()).collect();
        let d = DVector::from_fn(n, |i, _| {
            let lin: f64 = (0..p).map(|k| 0.5 * z[(i, k)]).sum();
            lin + interaction * z[(i, 0)] * z[(i, 1)] + e0[i]
        });
        let y = DVector::from_fn(n, |i, _| {
            let pi: f64 = (0..p).map(|k| 0.3 * (k as f64 + 1.0) * z[(i, k)]).sum();
            0.7 * d[i] + pi + 0.6 * e0[i] + 0.8 * e1[i] + 2.0
        });
        IVDataset::new(y, d, z, None).unwrap()
    }

    #[test]
    fn dimensions() {
        assert_eq!(basis_dimension(2, 1), 1.0);
        assert_eq!(basis_dimension(10, 1), 1.0);
        assert_eq!(basis_dimension(10, 2), 11.0);
        for p in 1..=10 {
            for v in 1..=p.min(4) {
                let s = interaction_subsets(p, v).unwrap();
                let want: usize = (0..v).map(|j| binomial(p, j) as usize).sum();
                assert_eq!(s.len(), want);
            }
        }
        assert!(interaction_subsets(3, 4).is_err());
        assert!(matches!(interaction_subsets(40, 20), Err(IvError::CombinatorialLimit { .. })));
    }

    #[test]
    fn columns_are_centered_products() {
        let ds = random_data(50, 3, 1, 1.0);
        let basis = build_interaction_basis(&ds, 2).unwrap();
        assert_eq!(basis.subset_index[0], vec![0, 1, 2]);
        let mu = linalg::column_means(ds.instruments());
        for (c, set) in basis.subset_index.iter().enumerate() {
            for i in 0..50 {
                let want: f64 = set.iter().map(|&k| ds.instruments()[(i, k)] - mu[k]).product();
                assert_eq!(basis.columns[(i, c)], want);
            }
        }
    }

    #[test]
    fn shift_invariance() {
        let ds = random_data(60, 3, 2, 1.0);
        let mut z = ds.instruments().clone();
        z.column_mut(1).add_scalar_mut(17.0);
        let shifted = ds.with_instruments(z).unwrap();
        let a = build_interaction_basis(&ds, 3).unwrap();
        let b = build_interaction_basis(&shifted, 3).unwrap();
        // column means of shifted data are exact only up to rounding of the shift
        assert!((a.columns - b.columns).amax() < 1e-12);
    }

    #[test]
    fn two_instrument_closed_form() {
        let ds = random_data(3000, 2, 5, 1.0);
        let r = g_interaction(&ds, 1).unwrap();
        let z = ds.instruments();
        let (m0, m1) = (z.column(0).mean(), z.column(1).mean());
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..ds.n() {
            let h = (z[(i, 0)] - m0) * (z[(i, 1)] - m1);
            num += h * ds.outcome()[i];
            den += h * ds.exposure()[i];
        }
        assert!((r.beta_hat.unwrap() - num / den).abs() < 1e-10);
    }

    #[test]
    fn sandwich_matches_stacked_m_estimation() {
        // numerical derivative of the stacked estimating equations in (mu, beta)
        let ds = random_data(800, 2, 8, 1.0);
        let r = g_interaction(&ds, 1).unwrap();
        let z = ds.instruments();
        let (y, d) = (ds.outcome(), ds.exposure());
        let n = ds.n() as f64;
        let beta = r.beta_hat.unwrap();
        let mu = [z.column(0).mean(), z.column(1).mean()];
        let psi = |i: usize, th: &[f64; 3]| -> [f64; 3] {
            let h = (z[(i, 0)] - th[0]) * (z[(i, 1)] - th[1]);
            [z[(i, 0)] - th[0], z[(i, 1)] - th[1], h * (y[i] - th[2] * d[i])]
        };
        let th = [mu[0], mu[1], beta];
        let mut jac: DMatrix<f64> = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let mut hi = th;
            let mut lo = th;
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            for i in 0..ds.n() {
                let (a, b) = (psi(i, &hi), psi(i, &lo));
                for r in 0..3 {
                    jac[(r, k)] += (a[r] - b[r]) / 2e-6 / n;
                }
            }
        }
        let mut meat: DMatrix<f64> = DMatrix::zeros(3, 3);
        for i in 0..ds.n() {
            let v = DVector::from_row_slice(&psi(i, &th));
            meat += &v * v.transpose() / n;
        }
        let ji = jac.try_inverse().unwrap();
        let cov: DMatrix<f64> = &ji * meat * ji.transpose() / n;
        let se = cov[(2, 2)].sqrt();
        assert!((r.se.unwrap() - se).abs() < 1e-6 * se, "{} vs {se}", r.se.unwrap());
    }

    #[test]
    fn no_interaction_is_weak() {
        let ds = random_data(4000, 2, 3, 0.0);
        assert!(matches!(g_interaction(&ds, 1), Err(IvError::WeakInteractionInstrument(_))));
    }

    #[test]
    fn dependent_instruments_warn() {
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let base: Vec<f64> = (0..n).map(|_| g()).collect();
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { base[i] } else { 0.0 });
        let mut z = z;
        for i in 0..n {
            z[(i, 1)] = 0.5 * base[i] + g();
        }
        let d = DVector::from_fn(n, |i, _| z[(i, 0)] * z[(i, 1)] + g());
        let y = DVector::from_fn(n, |i, _| d[i] + g());
        let r = g_interaction(&IVDataset::new(y, d, z, None).unwrap(), 1).unwrap();
        assert!(r.has_warning("DependentInstruments"));
    }

    /// Full factorial design over a discrete support: sample moments equal population moments.
    fn factorial(p: usize, levels: &[f64], beta: f64, pi: &[f64]) -> IVDataset {
        let k = levels.len();
        let n = k.pow(p as u32);
        let z = DMatrix::from_fn(n, p, |i, j| levels[(i / k.pow(j as u32)) % k]);
        let f = |i: usize| -> f64 {
            let lin: f64 = (0..p).map(|j| 0.4 * z[(i, j)]).sum();
            lin + 0.8 * (0..p).map(|j| z[(i, j)]).product::<f64>() + 0.3 * z[(i, 0)] * z[(i, 1)]
        };
        let d = DVector::from_fn(n, |i, _| f(i));
        let y = DVector::from_fn(n, |i, _| beta * d[i] + (0..p).map(|j| pi[j] * z[(i, j)]).sum::<f64>());
        IVDataset::new(y, d, z, None).unwrap()
    }

    #[test]
    fn population_moment_identifies_beta() {
        let levels = [-1.0, 0.0, 2.0];
        // all instruments invalid with v = 1; two invalid with v = 2 (only the full product used)
        for (p, v) in [(2usize, 1usize), (3, 1), (3, 2)] {
            let pi: Vec<f64> = (0..p).map(|j| if v == 2 && j == 2 { 0.0 } else { 0.5 + j as f64 }).collect();
            let ds = factorial(p, &levels, 1.3, &pi);
            let basis = build_interaction_basis(&ds, v).unwrap();
            assert!(interaction_moments(&basis, &ds, 1.3).amax() < 1e-8);
            assert!(interaction_moments(&basis, &ds, 1.8).amax() > 1e-3);
            assert!(interaction_moments(&basis, &ds, 0.8).amax() > 1e-3);
        }
    }
}
