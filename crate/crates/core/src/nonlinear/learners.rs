//! First-stage learners whose fitted values on split A are linear in the split-A exposures.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;

/// Interior knots per instrument for the cubic spline basis.
pub const SPLINE_INTERIOR_KNOTS: usize = 5;
const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    BasisSpline,
    Polynomial,
    RandomForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub trees: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
    /// Fraction of split B drawn without replacement for each tree.
    pub sample_fraction: f64,
}

impl Default for ForestOptions {
    fn default() -> Self {
        Self { trees: 50, min_leaf: 10, max_depth: 30, sample_fraction: 0.5 }
    }
}

/// Leaf membership of the split-A rows in one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPartition {
    pub leaf_of: Vec<u32>,
    pub members: Vec<Vec<u32>>,
}

/// The aggregation matrix `Q` in operator form.
#[derive(Debug, Clone, PartialEq)]
pub enum HatOperator {
    /// `Q = U U'` with orthonormal `U`.
    Projection { basis: DMatrix<f64> },
    /// `Q = (1/T) sum_t Q_t`, `Q_t` averaging over leaf-mates within split A.
    Forest { trees: Vec<LeafPartition> },
}

impl HatOperator {
    pub fn dim(&self) -> usize {
        match self {
            HatOperator::Projection { basis } => basis.nrows(),
            HatOperator::Forest { trees } => trees.first().map_or(0, |t| t.leaf_of.len()),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let m = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        self.apply_matrix(&m).column(0).into_owned()
    }

    /// `Q X`; `Q` is symmetric in both forms.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            HatOperator::Projection { basis } => basis * basis.tr_mul(x),
            HatOperator::Forest { trees } => {
                let parts: Vec<DMatrix<f64>> = trees.par_iter().map(|t| leaf_average(t, x)).collect();
                let mut out = DMatrix::zeros(x.nrows(), x.ncols());
                for part in parts {
                    out += part;
                }
                out / trees.len() as f64
            }
        }
    }

    /// `(Q Q')_ii` for every row.
    pub fn row_norms_squared(&self) -> Vec<f64> {
        match self {
            HatOperator::Projection { basis } => basis.row_iter().map(|r| r.norm_squared()).collect(),
            HatOperator::Forest { trees } => {
                let n = self.dim();
                let t = trees.len() as f64;
                (0..n)
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; n], Vec::new()),
                        |(acc, touched), i| {
                            for tree in trees {
                                let mem = &tree.members[tree.leaf_of[i] as usize];
                                let w = 1.0 / (t * mem.len() as f64);
                                for &j in mem {
                                    let j = j as usize;
                                    if acc[j] == 0.0 {
                                        touched.push(j);
                                    }
                                    acc[j] += w;
                                }
                            }
                            let mut s = 0.0;
                            for &j in touched.iter() {
                                s += acc[j] * acc[j];
                                acc[j] = 0.0;
                            }
                            touched.clear();
                            s
                        },
                    )
                    .collect()
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }
}

fn leaf_average(tree: &LeafPartition, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut sums = DMatrix::zeros(tree.members.len(), x.ncols());
    for (leaf, mem) in tree.members.iter().enumerate() {
        for &i in mem {
            for c in 0..x.ncols() {
                sums[(leaf, c)] += x[(i as usize, c)];
            }
        }
        let k = mem.len().max(1) as f64;
        for c in 0..x.ncols() {
            sums[(leaf, c)] /= k;
        }
    }
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, c| sums[(tree.leaf_of[i] as usize, c)])
}

/// First-stage fit on split A with `fitted_exposure = Q exposure_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct HatMatrixFit {
    pub q: HatOperator,
    pub fitted_exposure: DVector<f64>,
    /// Row indices of split A (ascending).
    pub split_a: Vec<usize>,
    /// Row indices of split B (ascending).
    pub split_b: Vec<usize>,
}

impl HatMatrixFit {
    pub fn q_matrix(&self) -> DMatrix<f64> {
        self.q.to_dense()
    }
}

/// Random partition with `round(n * fraction)` rows in split A.
pub fn random_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_a = ((n as f64) * fraction).round() as usize;
    let mut a = idx[..n_a].to_vec();
    let mut b = idx[n_a..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// Trains `learner` on split B and represents its split-A fit through `Q`.
pub fn fit_learner(
    z: &DMatrix<f64>,
    d: &DVector<f64>,
    split_a: Vec<usize>,
    split_b: Vec<usize>,
    learner: Learner,
    forest: &ForestOptions,
    seed: u64,
) -> HatMatrixFit {
    let z_a = z.select_rows(split_a.iter());
    let z_b = z.select_rows(split_b.iter());
    let d_a = linalg::select_entries(d, &split_a);
    let q = match learner {
        Learner::BasisSpline => {
            let design = spline_design(&z_a, &z_b, z);
            HatOperator::Projection { basis: linalg::orthonormal_basis(&design, BASIS_TOL) }
        }
        Learner::Polynomial => {
            let design = polynomial_design(&z_a, &z_b);
            HatOperator::Projection { basis: linalg::orthonormal_basis(&design, BASIS_TOL) }
        }
        Learner::RandomForest => {
            let d_b = linalg::select_entries(d, &split_b);
            HatOperator::Forest { trees: grow_forest(&z_b, &d_b, &z_a, forest, seed) }
        }
    };
    let fitted_exposure = q.apply(&d_a);
    HatMatrixFit { q, fitted_exposure, split_a, split_b }
}

/// Standardizes with split-B moments.
fn standardize(z_a: &DMatrix<f64>, z_b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z_a.clone();
    for j in 0..z_a.ncols() {
        let col = z_b.column(j);
        let m = col.mean();
        let sd = (col.map(|x| (x - m) * (x - m)).sum() / col.len().max(1) as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        out.column_mut(j).apply(|x| *x = (*x - m) / sd);
    }
    out
}

fn push_pairwise(cols: &mut Vec<DVector<f64>>, s: &DMatrix<f64>) {
    for j in 0..s.ncols() {
        for k in j + 1..s.ncols() {
            cols.push(s.column(j).component_mul(&s.column(k)));
        }
    }
}

/// Intercept, `z, z^2, z^3` per instrument and all pairwise products.
pub fn polynomial_design(z_a: &DMatrix<f64>, z_b: &DMatrix<f64>) -> DMatrix<f64> {
    let s = standardize(z_a, z_b);
    let mut cols = vec![DVector::from_element(s.nrows(), 1.0)];
    for j in 0..s.ncols() {
        let c = s.column(j).into_owned();
        cols.push(c.clone());
        cols.push(c.map(|x| x * x));
        cols.push(c.map(|x| x * x * x));
    }
    push_pairwise(&mut cols, &s);
    DMatrix::from_columns(&cols)
}

/// Cubic B-splines per instrument (interior knots at split-B quantiles, boundary knots at
/// the full-sample range) and all pairwise products.
pub fn spline_design(z_a: &DMatrix<f64>, z_b: &DMatrix<f64>, z_all: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for j in 0..z_a.ncols() {
        let all = z_all.column(j);
        let (lo, hi) = (all.min(), all.max());
        let mut sorted: Vec<f64> = z_b.column(j).iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let mut interior: Vec<f64> = (1..=SPLINE_INTERIOR_KNOTS)
            .map(|k| quantile_sorted(&sorted, k as f64 / (SPLINE_INTERIOR_KNOTS + 1) as f64))
            .filter(|&x| x > lo && x < hi)
            .collect();
        interior.dedup();
        let knots = clamped_knots(lo, hi, &interior);
        let nb = knots.len() - 4;
        let mut block = DMatrix::zeros(z_a.nrows(), nb);
        for i in 0..z_a.nrows() {
            let vals = bspline_basis(&knots, z_a[(i, j)]);
            for (k, v) in vals.into_iter().enumerate() {
                block[(i, k)] = v;
            }
        }
        cols.extend(block.column_iter().map(|c| c.into_owned()));
    }
    let s = standardize(z_a, z_b);
    push_pairwise(&mut cols, &s);
    DMatrix::from_columns(&cols)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn clamped_knots(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut k = vec![lo; 4];
    k.extend_from_slice(interior);
    k.extend(std::iter::repeat_n(hi, 4));
    k
}

/// Values of all cubic B-splines on a clamped knot vector at `x` (Cox-de Boor).
pub fn bspline_basis(knots: &[f64], x: f64) -> Vec<f64> {
    let nb = knots.len() - 4;
    let last = knots.len() - 1;
    let x = x.clamp(knots[0], knots[last]);
    let mut b: Vec<f64> = (0..last)
        .map(|i| {
            let inside = knots[i] <= x && x < knots[i + 1];
            let at_end = x == knots[last] && knots[i] < knots[i + 1] && knots[i + 1] == knots[last];
            if inside || at_end { 1.0 } else { 0.0 }
        })
        .collect();
    for deg in 1..=3 {
        for i in 0..last - deg {
            let l = knots[i + deg] - knots[i];
            let r = knots[i + deg + 1] - knots[i + 1];
            let a = if l > 0.0 { (x - knots[i]) / l * b[i] } else { 0.0 };
            let c = if r > 0.0 { (knots[i + deg + 1] - x) / r * b[i + 1] } else { 0.0 };
            b[i] = a + c;
        }
    }
    b.truncate(nb);
    b
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(u32),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

fn grow_forest(z_b: &DMatrix<f64>, d_b: &DVector<f64>, z_a: &DMatrix<f64>, opts: &ForestOptions, seed: u64) -> Vec<LeafPartition> {
    let trees = opts.trees.max(1);
    (0..trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64 + 1);
            let nodes = grow_tree(z_b, d_b, opts, &mut rng);
            partition(&nodes, z_a)
        })
        .collect()
}

fn grow_tree(z: &DMatrix<f64>, d: &DVector<f64>, opts: &ForestOptions, rng: &mut ChaCha8Rng) -> Vec<Node> {
    let n = z.nrows();
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    let take = ((n as f64 * opts.sample_fraction).round() as usize).clamp(1, n);
    rows.truncate(take);
    let p = z.ncols();
    let mtry = p.div_ceil(3).max(1);
    let mut nodes = Vec::new();
    let mut leaves = 0u32;
    let mut stack = vec![(rows, 0usize, usize::MAX, false)];
    // (rows, depth, parent, is_right)
    while let Some((rows, depth, parent, is_right)) = stack.pop() {
        let id = nodes.len();
        let split = if depth < opts.max_depth && rows.len() >= 2 * opts.min_leaf.max(1) {
            let mut feats: Vec<usize> = (0..p).collect();
            feats.shuffle(rng);
            feats.truncate(mtry);
            best_split(z, d, &rows, &feats, opts.min_leaf.max(1))
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| z[(i, feature)] <= threshold);
                nodes.push(Node::Split { feature, threshold, left: usize::MAX, right: usize::MAX });
                stack.push((r, depth + 1, id, true));
                stack.push((l, depth + 1, id, false));
            }
            None => {
                nodes.push(Node::Leaf(leaves));
                leaves += 1;
            }
        }
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut nodes[parent] {
                if is_right {
                    *right = id;
                } else {
                    *left = id;
                }
            }
        }
    }
    nodes
}

/// Variance-reducing split over the candidate features, respecting the minimum leaf size.
fn best_split(z: &DMatrix<f64>, d: &DVector<f64>, rows: &[usize], feats: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let m = rows.len();
    let total: f64 = rows.iter().map(|&i| d[i]).sum();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in feats {
        order.sort_by(|&a, &b| z[(a, f)].total_cmp(&z[(b, f)]));
        let mut left = 0.0;
        for k in 0..m - 1 {
            left += d[order[k]];
            let nl = k + 1;
            let nr = m - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (x0, x1) = (z[(order[k], f)], z[(order[k + 1], f)]);
            if x0 == x1 {
                continue;
            }
            let right = total - left;
            // maximizing this is equivalent to minimizing the within-child sum of squares
            let gain = left * left / nl as f64 + right * right / nr as f64;
            if best.is_none_or(|(g, _, _)| gain > g) {
                best = Some((gain, f, 0.5 * (x0 + x1)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn partition(nodes: &[Node], z_a: &DMatrix<f64>) -> LeafPartition {
    let leaf_of: Vec<u32> = (0..z_a.nrows())
        .map(|i| {
            let mut k = 0;
            loop {
                match &nodes[k] {
                    Node::Leaf(l) => return *l,
                    Node::Split { feature, threshold, left, right } => {
                        k = if z_a[(i, *feature)] <= *threshold { *left } else { *right };
                    }
                }
            }
        })
        .collect();
    // renumber to the leaves that hold split-A rows
    let mut map = std::collections::HashMap::new();
    let mut members: Vec<Vec<u32>> = Vec::new();
    let leaf_of = leaf_of
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let id = *map.entry(l).or_insert_with(|| {
                members.push(Vec::new());
                members.len() as u32 - 1
            });
            members[id as usize].push(i as u32);
            id
        })
        .collect();
    LeafPartition { leaf_of, members }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |i, j| ((i * (2 * j + 3) + 7 * j) as f64 * 0.613).sin() * 2.0)
    }

    #[test]
    fn bsplines_partition_unity() {
        let knots = clamped_knots(-1.0, 2.0, &[0.0, 0.5, 1.1]);
        for k in 0..=60 {
            let x = -1.0 + 3.0 * k as f64 / 60.0;
            let b = bspline_basis(&knots, x);
            assert_eq!(b.len(), 7);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12, "x = {x}");
            assert!(b.iter().all(|&v| v >= -1e-15));
        }
    }

    #[test]
    fn spline_hat_is_projection() {
        let z = design(300, 2);
        let d = DVector::from_fn(300, |i, _| z[(i, 0)].powi(2) + 0.3 * ((i as f64) * 1.7).cos());
        let (a, b) = random_split(300, 0.5, 4);
        let fit = fit_learner(&z, &d, a.clone(), b, Learner::BasisSpline, &ForestOptions::default(), 0);
        let q = fit.q_matrix();
        assert!((&q * &q - &q).amax() < 1e-8);
        assert!((&q - q.transpose()).amax() < 1e-12);
        let d_a = linalg::select_entries(&d, &a);
        assert!((&fit.fitted_exposure - &q * d_a).amax() < 1e-10);
    }

    #[test]
    fn forest_weights_are_averaging() {
        let z = design(400, 3);
        let d = DVector::from_fn(400, |i, _| z[(i, 0)] * z[(i, 1)]);
        let (a, b) = random_split(400, 0.5, 9);
        let opts = ForestOptions { trees: 7, min_leaf: 5, ..ForestOptions::default() };
        let fit = fit_learner(&z, &d, a.clone(), b, Learner::RandomForest, &opts, 3);
        let q = fit.q_matrix();
        for i in 0..q.nrows() {
            assert!((q.row(i).sum() - 1.0).abs() < 1e-12);
        }
        assert!((&q - q.transpose()).amax() < 1e-12);
        let norms = fit.q.row_norms_squared();
        let qq = &q * q.transpose();
        for i in 0..q.nrows() {
            assert!((norms[i] - qq[(i, i)]).abs() < 1e-12);
        }
        let again = fit_learner(&z, &d, a, random_split(400, 0.5, 9).1, Learner::RandomForest, &opts, 3);
        assert_eq!(again.q, fit.q);
    }

    #[test]
    fn split_sizes() {
        let (a, b) = random_split(1000, 0.3, 1);
        assert_eq!(a.len(), 300);
        assert_eq!(b.len(), 700);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }
}
