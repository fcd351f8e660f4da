use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::SearchGrid;
use super::searching::{default_grid, searching_ci, threshold, Screen};
use crate::error::{IvError, Result};
use crate::linalg;
use crate::model::{IntervalUnion, ReducedFormFit};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_CN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOptions {
    pub m: usize,
    pub c_n: f64,
    /// Explicit shrinkage; overrides `c_n` and does not need the sample size.
    pub lambda: Option<f64>,
    pub seed: u64,
    pub grid: Option<SearchGrid>,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { m: DEFAULT_RESAMPLES, c_n: DEFAULT_CN, lambda: None, seed: 0, grid: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingCi {
    pub ci: IntervalUnion,
    pub lambda: f64,
    /// Number of resamples with a nonempty searching set.
    pub nonempty: usize,
    /// Set when every resampled set was empty and the searching interval was returned.
    pub fallback: bool,
}

/// Shrinkage `c_n (ln(n) / m)^{1/(2p)}`.
pub fn sampling_lambda(c_n: f64, m: usize, n: usize, p: usize) -> f64 {
    c_n * ((n as f64).ln() / m as f64).powf(1.0 / (2.0 * p as f64))
}

pub fn sampling_ci(fit: &ReducedFormFit, alpha: f64, m: usize, c_n: Option<f64>, seed: u64) -> Result<SamplingCi> {
    let opts = SamplingOptions { m, c_n: c_n.unwrap_or(DEFAULT_CN), seed, ..SamplingOptions::default() };
    sampling_ci_with(fit, alpha, &opts)
}

pub fn sampling_ci_with(fit: &ReducedFormFit, alpha: f64, opts: &SamplingOptions) -> Result<SamplingCi> {
    let factor = linalg::psd_factor(&fit.cov);
    sampling_with_factor(fit, alpha, opts, &factor)
}

/// Resamples `(Gamma_hat, gamma_hat) + factor * e`, `e ~ N(0, I)`, and applies the
/// shrunken searching rule with the original standard errors.
pub(crate) fn sampling_with_factor(fit: &ReducedFormFit, alpha: f64, opts: &SamplingOptions, factor: &DMatrix<f64>) -> Result<SamplingCi> {
    fit.check_first_stage()?;
    if opts.m == 0 {
        return Err(IvError::InvalidArgument("sampling CI needs at least one resample".into()));
    }
    let p = fit.p();
    let lambda = match opts.lambda {
        Some(l) if l > 0.0 => l,
        Some(l) => return Err(IvError::NonPositiveLambda(l)),
        None => sampling_lambda(opts.c_n, opts.m, fit.sample_size()?, p),
    };
    let grid = match opts.grid {
        Some(g) => g,
        None => default_grid(fit)?,
    };
    grid.require_resolution()?;
    let len = grid.len();
    let screen = Screen::new(fit, lambda * threshold(p, alpha));
    let mean = DVector::from_iterator(2 * p, fit.big_gamma_hat.iter().chain(fit.gamma_hat.iter()).copied());

    let bounds: Vec<Option<(usize, usize)>> = (0..opts.m)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(m as u64);
            let e = DVector::from_fn(2 * p, |_, _| StandardNormal.sample(&mut rng));
            let draw = &mean + factor * e;
            resample_bounds(&screen, &draw, p, &grid, len)
        })
        .collect();
    let mut nonempty = 0;
    let mut lo = usize::MAX;
    let mut hi = 0;
    for (l, u) in bounds.into_iter().flatten() {
        nonempty += 1;
        lo = lo.min(l);
        hi = hi.max(u);
    }
    if nonempty == 0 {
        let ci = searching_ci(fit, alpha, Some(grid))?;
        return Ok(SamplingCi { ci, lambda, nonempty, fallback: true });
    }
    Ok(SamplingCi { ci: IntervalUnion::single(grid.point(lo), grid.point(hi)), lambda, nonempty, fallback: false })
}

/// First and last grid index with more than `p/2` accepted instruments.
fn resample_bounds(screen: &Screen, draw: &DVector<f64>, p: usize, grid: &SearchGrid, len: usize) -> Option<(usize, usize)> {
    let mut events: Vec<(usize, i32)> = Vec::with_capacity(2 * p);
    for j in 0..p {
        match screen.index_range(j, draw[j], draw[p + j], grid, len) {
            Ok(Some((a, b))) => {
                events.push((a, 1));
                events.push((b + 1, -1));
            }
            Ok(None) => {}
            Err(()) => return pointwise_bounds(screen, draw, p, grid, len),
        }
    }
    events.sort_unstable();
    let mut count = 0;
    let mut first = None;
    let mut last = None;
    let mut idx = 0;
    while idx < events.len() {
        let pos = events[idx].0;
        while idx < events.len() && events[idx].0 == pos {
            count += events[idx].1;
            idx += 1;
        }
        if 2 * count > p as i32 {
            first.get_or_insert(pos);
            // the run lasts until the next event position
            let end = events.get(idx).map(|e| e.0).unwrap_or(len) - 1;
            last = Some(end);
        }
    }
    first.zip(last)
}

fn pointwise_bounds(screen: &Screen, draw: &DVector<f64>, p: usize, grid: &SearchGrid, len: usize) -> Option<(usize, usize)> {
    let ok = |k: usize| {
        let b = grid.point(k);
        2 * (0..p).filter(|&j| screen.accepts(j, draw[j], draw[p + j], b)).count() > p
    };
    let first = (0..len).find(|&k| ok(k))?;
    let last = (0..len).rev().find(|&k| ok(k))?;
    Some((first, last))
}
