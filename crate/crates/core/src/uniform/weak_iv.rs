//! Anderson-Rubin and conditional likelihood ratio confidence sets for one valid set,
//! expressed through the 2x2 matrices `M = Ybar'(P_Z - P_W)Ybar` and the reduced-form error
//! covariance `Omega = Ybar'M_Z Ybar / dof`, where `Ybar = [Y, D]`.

use nalgebra::Matrix2;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::model::IntervalUnion;
use crate::stats;

const SIMPSON_INTERVALS: usize = 400;
const CLR_GRID_POINTS: usize = 2001;
const CLR_GRID_HALF_WIDTH: f64 = 20.0;
const BISECTION_STEPS: usize = 60;

/// Sufficient statistics for weak-instrument-robust tests on one valid set.
#[derive(Debug, Clone, Copy)]
pub struct WeakIvStats {
    pub m: Matrix2<f64>,
    pub omega: Matrix2<f64>,
    /// Number of tested instruments.
    pub k: usize,
    /// Residual degrees of freedom.
    pub dof: f64,
}

impl WeakIvStats {
    fn b(beta: f64) -> nalgebra::Vector2<f64> {
        nalgebra::Vector2::new(1.0, -beta)
    }

    pub fn ar_statistic(&self, beta: f64) -> f64 {
        let b = Self::b(beta);
        (b.dot(&(self.m * b)) / self.k as f64) / b.dot(&(self.omega * b))
    }

    /// `(Q_S, Q_T, Q_ST)` at `beta`.
    pub fn q_stats(&self, beta: f64) -> (f64, f64, f64) {
        let b = Self::b(beta);
        let a = nalgebra::Vector2::new(beta, 1.0);
        let oi = self.omega.try_inverse().unwrap_or_else(Matrix2::zeros);
        let oia = oi * a;
        let bob = b.dot(&(self.omega * b));
        let aoa = a.dot(&oia);
        let qs = b.dot(&(self.m * b)) / bob;
        let qt = oia.dot(&(self.m * oia)) / aoa;
        let qst = b.dot(&(self.m * oia)) / (bob * aoa).sqrt();
        (qs, qt, qst)
    }

    pub fn lr_statistic(&self, beta: f64) -> (f64, f64) {
        let (qs, qt, qst) = self.q_stats(beta);
        let lr = 0.5 * (qs - qt + ((qs - qt).powi(2) + 4.0 * qst * qst).sqrt());
        (lr, qt)
    }

    pub fn clr_p_value(&self, beta: f64) -> f64 {
        let (lr, qt) = self.lr_statistic(beta);
        clr_p_value(lr, qt, self.k)
    }

    /// Two-stage least squares estimate and its homoskedastic standard error.
    pub fn tsls(&self) -> (f64, f64) {
        let beta = self.m[(0, 1)] / self.m[(1, 1)];
        let b = Self::b(beta);
        let s2 = b.dot(&(self.omega * b));
        (beta, (s2 / self.m[(1, 1)]).sqrt())
    }

    /// `{beta : AR(beta) <= F_{k, dof}(1 - alpha)}` in closed form.
    pub fn ar_set(&self, alpha: f64) -> IntervalUnion {
        let crit = stats::f_quantile(self.k as f64, self.dof, 1.0 - alpha);
        let a = self.m / self.k as f64 - self.omega * crit;
        // a00 - 2 beta a01 + beta^2 a11 <= 0
        quadratic_sublevel(a[(1, 1)], -2.0 * a[(0, 1)], a[(0, 0)])
    }

    /// `{beta : CLR p-value > alpha}` by grid inversion around the TSLS estimate with
    /// bisection-refined endpoints. The flag reports acceptance at a grid edge, in which
    /// case that side is extended to infinity.
    pub fn clr_set(&self, alpha: f64) -> (IntervalUnion, bool) {
        let (center, se) = self.tsls();
        let half = CLR_GRID_HALF_WIDTH * if se.is_finite() && se > 0.0 { se } else { 1.0 };
        let lo = center - half;
        let step = 2.0 * half / (CLR_GRID_POINTS - 1) as f64;
        let pts: Vec<f64> = (0..CLR_GRID_POINTS).map(|k| lo + k as f64 * step).collect();
        let acc = |b: f64| self.clr_p_value(b) > alpha;
        let flags: Vec<bool> = pts.iter().map(|&b| acc(b)).collect();
        let refine = |inside: f64, outside: f64| {
            let (mut a, mut o) = (inside, outside);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (a + o);
                if acc(mid) {
                    a = mid;
                } else {
                    o = mid;
                }
            }
            a
        };
        let last = CLR_GRID_POINTS - 1;
        let truncated = flags[0] || flags[last];
        let mut out = Vec::new();
        let mut k = 0;
        while k <= last {
            if !flags[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < last && flags[k + 1] {
                k += 1;
            }
            let l = if start == 0 { f64::NEG_INFINITY } else { refine(pts[start], pts[start - 1]) };
            let u = if k == last { f64::INFINITY } else { refine(pts[k], pts[k + 1]) };
            out.push((l, u));
            k += 1;
        }
        (IntervalUnion::from_intervals(out), truncated)
    }
}

/// `{x : a x^2 + b x + c <= 0}`.
pub fn quadratic_sublevel(a: f64, b: f64, c: f64) -> IntervalUnion {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return IntervalUnion::single(f64::NEG_INFINITY, f64::INFINITY);
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return if c <= 0.0 { IntervalUnion::single(f64::NEG_INFINITY, f64::INFINITY) } else { IntervalUnion::empty() };
        }
        let root = -c / b;
        return if b > 0.0 {
            IntervalUnion::single(f64::NEG_INFINITY, root)
        } else {
            IntervalUnion::single(root, f64::INFINITY)
        };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return if a > 0.0 { IntervalUnion::empty() } else { IntervalUnion::single(f64::NEG_INFINITY, f64::INFINITY) };
    }
    let sq = disc.sqrt();
    // numerically stable roots
    let qq = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = if qq != 0.0 { (qq / a, c / qq) } else { (0.0, 0.0) };
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    if a > 0.0 {
        IntervalUnion::single(r1, r2)
    } else {
        IntervalUnion::from_intervals(vec![(f64::NEG_INFINITY, r1), (r2, f64::INFINITY)])
    }
}

/// `P(LR > x | Q_T = q)` with `LR` the conditional likelihood ratio statistic on `k`
/// instruments: `E_B[P(chi2_1 > x (1 - B/(x+q)))]` with `B ~ chi2_{k-1}`.
pub fn clr_p_value(x: f64, q: f64, k: usize) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let q = q.max(0.0);
    let chi1_sf = |y: f64| if y <= 0.0 { 1.0 } else { erfc((y / 2.0).sqrt()) };
    if k <= 1 {
        return chi1_sf(x);
    }
    let m = (k - 1) as f64;
    let s = x + q;
    let tail = stats::chi2_sf(m, s);
    // substitute B = t^2 to remove the density singularity at zero
    let log_norm = std::f64::consts::LN_2 - (m / 2.0) * std::f64::consts::LN_2 - ln_gamma(m / 2.0);
    let integrand = |t: f64| {
        let dens = if t == 0.0 {
            if m == 1.0 { log_norm.exp() } else { 0.0 }
        } else {
            (log_norm + (m - 1.0) * t.ln() - t * t / 2.0).exp()
        };
        dens * chi1_sf(x * (1.0 - t * t / s))
    };
    let upper = s.sqrt();
    let h = upper / SIMPSON_INTERVALS as f64;
    let mut acc = integrand(0.0) + integrand(upper);
    for i in 1..SIMPSON_INTERVALS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    (tail + acc * h / 3.0).clamp(0.0, 1.0)
}
