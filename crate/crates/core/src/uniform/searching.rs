use super::grid::SearchGrid;
use crate::error::Result;
use crate::model::{IntervalUnion, ReducedFormFit};
use crate::stats;

/// Per-instrument acceptance rule `|G_j - b g_j| <= t * se_j(b)` where `se_j(b)` is the
/// delta-method standard error of `Gamma_hat_j - b gamma_hat_j` from the original fit.
#[derive(Debug, Clone)]
pub(crate) struct Screen {
    var_big: Vec<f64>,
    cov: Vec<f64>,
    var_small: Vec<f64>,
    pub t: f64,
}

impl Screen {
    pub fn new(fit: &ReducedFormFit, t: f64) -> Self {
        let p = fit.p();
        Self {
            var_big: (0..p).map(|j| fit.var_big_gamma(j)).collect(),
            cov: (0..p).map(|j| fit.cov_big_small(j, j)).collect(),
            var_small: (0..p).map(|j| fit.var_gamma(j)).collect(),
            t,
        }
    }

    #[inline]
    pub fn accepts(&self, j: usize, big: f64, small: f64, b: f64) -> bool {
        let v = self.var_big[j] - 2.0 * b * self.cov[j] + b * b * self.var_small[j];
        (big - b * small).abs() <= self.t * v.max(0.0).sqrt()
    }

    /// Grid indices accepted for instrument `j`, as one contiguous range, when the
    /// acceptance region is a bounded interval; `Err(())` when it is not convex.
    pub fn index_range(&self, j: usize, big: f64, small: f64, grid: &SearchGrid, len: usize) -> std::result::Result<Option<(usize, usize)>, ()> {
        let t2 = self.t * self.t;
        let qa = small * small - t2 * self.var_small[j];
        if !(qa > 0.0) {
            return Err(());
        }
        let qb = -2.0 * (big * small - t2 * self.cov[j]);
        let qc = big * big - t2 * self.var_big[j];
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Ok(None);
        }
        let sq = disc.sqrt();
        let r1 = (-qb - sq) / (2.0 * qa);
        let r2 = (-qb + sq) / (2.0 * qa);
        let last = len as i64 - 1;
        let mut lo = ((r1 - grid.lower) / grid.step).ceil().clamp(-1.0, len as f64) as i64;
        let mut hi = ((r2 - grid.lower) / grid.step).floor().clamp(-1.0, len as f64) as i64;
        lo = lo.clamp(0, last);
        hi = hi.clamp(0, last);
        let acc = |k: i64| self.accepts(j, big, small, grid.point(k as usize));
        // reconcile the analytic roots with pointwise evaluation at the boundaries
        while lo > 0 && acc(lo - 1) {
            lo -= 1;
        }
        while lo <= hi && !acc(lo) {
            lo += 1;
        }
        while hi < last && acc(hi + 1) {
            hi += 1;
        }
        while hi >= lo && !acc(hi) {
            hi -= 1;
        }
        if lo > hi {
            return Ok(None);
        }
        Ok(Some((lo as usize, hi as usize)))
    }
}

/// `L(b)`: number of instruments whose reduced-form residual at `b` is within
/// `z_{1 - alpha/(2p)}` standard errors of zero.
pub fn valid_count(fit: &ReducedFormFit, alpha: f64, b: f64) -> usize {
    let screen = Screen::new(fit, threshold(fit.p(), alpha));
    count_at(&screen, fit, b)
}

fn count_at(screen: &Screen, fit: &ReducedFormFit, b: f64) -> usize {
    (0..fit.p())
        .filter(|&j| screen.accepts(j, fit.big_gamma_hat[j], fit.gamma_hat[j], b))
        .count()
}

pub(crate) fn threshold(p: usize, alpha: f64) -> f64 {
    stats::normal_quantile(1.0 - alpha / (2.0 * p as f64))
}

/// `[min r - 10 max se, max r + 10 max se]` with step `min se / 10`, where `r_j` are the
/// ratio estimates; the step is widened if the point cap would be exceeded.
pub fn default_grid(fit: &ReducedFormFit) -> Result<SearchGrid> {
    fit.check_first_stage()?;
    let ratios = fit.ratios();
    let ses: Vec<f64> = (0..fit.p()).map(|j| fit.ratio_se(j)).collect();
    let max_se = ses.iter().copied().fold(0.0, f64::max);
    let min_se = ses.iter().copied().fold(f64::INFINITY, f64::min);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * max_se;
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * max_se;
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let step = if min_se > 0.0 { min_se / 10.0 } else { (hi - lo) / 1000.0 };
    SearchGrid::capped(lo, hi, step)
}

/// Searching confidence set `{b on grid : L(b) > p/2}` under the majority rule.
pub fn searching_ci(fit: &ReducedFormFit, alpha: f64, grid: Option<SearchGrid>) -> Result<IntervalUnion> {
    fit.check_first_stage()?;
    let grid = match grid {
        Some(g) => g,
        None => default_grid(fit)?,
    };
    grid.require_resolution()?;
    let screen = Screen::new(fit, threshold(fit.p(), alpha));
    let p = fit.p();
    let accepted: Vec<bool> = (0..grid.len())
        .map(|k| 2 * count_at(&screen, fit, grid.point(k)) > p)
        .collect();
    Ok(runs_to_union(&accepted, &grid))
}

/// Merges runs of accepted grid points into closed intervals.
pub(crate) fn runs_to_union(accepted: &[bool], grid: &SearchGrid) -> IntervalUnion {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &a) in accepted.iter().enumerate() {
        match (a, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((grid.point(s), grid.point(k - 1)));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((grid.point(s), grid.point(accepted.len() - 1)));
    }
    IntervalUnion::from_intervals(out)
}
