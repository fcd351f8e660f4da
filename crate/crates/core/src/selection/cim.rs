//! Confidence-interval method: cluster instruments whose working intervals overlap.

use crate::error::Result;
use crate::linear::iv_core::IvContext;
use crate::linear::tsls::require_centered;
use crate::model::{fit_reduced_form, normalize_set, CovMode, EstimateReport, IVDataset};
use crate::selection::jtest::{default_level, downward_testing_in, j_test_in};
use crate::{stats, DEFAULT_ALPHA};

pub const Q_GRID_LEN: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct CimOptions {
    pub q_grid: Option<Vec<f64>>,
    /// Downward-testing level; `0.1 / ln(n)` when `None`.
    pub level: Option<f64>,
    pub cov_mode: CovMode,
    pub alpha: f64,
}

impl Default for CimOptions {
    fn default() -> Self {
        Self { q_grid: None, level: None, cov_mode: CovMode::Robust, alpha: DEFAULT_ALPHA }
    }
}

/// Evenly spaced multipliers from `z_{0.6}` to `z_{1 - 0.025/p^2}`.
pub fn default_q_grid(p: usize) -> Vec<f64> {
    let lo = stats::normal_quantile(0.6);
    let hi = stats::normal_quantile(1.0 - 0.025 / (p * p) as f64);
    (0..Q_GRID_LEN)
        .map(|k| lo + (hi - lo) * k as f64 / (Q_GRID_LEN - 1) as f64)
        .collect()
}

/// Largest number of closed intervals sharing a common point, and every distinct set of
/// that size, by a sweep over sorted endpoints (left endpoints first on ties).
pub fn max_overlap_sets(intervals: &[(f64, f64)]) -> (usize, Vec<Vec<usize>>) {
    let mut events: Vec<(f64, u8, usize)> = Vec::with_capacity(2 * intervals.len());
    for (j, &(l, u)) in intervals.iter().enumerate() {
        events.push((l, 0, j));
        events.push((u, 1, j));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut active = vec![false; intervals.len()];
    let mut count = 0;
    let mut best = 0;
    let mut sets: Vec<Vec<usize>> = Vec::new();
    for &(_, kind, j) in &events {
        if kind == 1 {
            active[j] = false;
            count -= 1;
            continue;
        }
        active[j] = true;
        count += 1;
        if count >= best {
            let set: Vec<usize> = (0..active.len()).filter(|&k| active[k]).collect();
            if count > best {
                best = count;
                sets.clear();
            }
            if !sets.contains(&set) {
                sets.push(set);
            }
        }
    }
    (best, sets)
}

pub fn cim(data: &IVDataset, q_grid: Option<&[f64]>) -> Result<EstimateReport> {
    cim_with(data, &CimOptions { q_grid: q_grid.map(|q| q.to_vec()), ..CimOptions::default() })
}

pub fn cim_with(data: &IVDataset, opts: &CimOptions) -> Result<EstimateReport> {
    require_centered(data)?;
    let fit = fit_reduced_form(data, opts.cov_mode)?;
    fit.check_first_stage()?;
    let ctx = IvContext::new(data)?;
    let p = data.p();
    let ratios = fit.ratios();
    let ses: Vec<f64> = (0..p).map(|j| fit.ratio_se(j)).collect();
    let grid = opts.q_grid.clone().unwrap_or_else(|| default_q_grid(p));

    // one selected cluster per q, ties broken by the smaller J statistic
    let mut candidates: Vec<(Vec<usize>, f64)> = Vec::new();
    for &q in &grid {
        let intervals: Vec<(f64, f64)> = (0..p).map(|j| (ratios[j] - q * ses[j], ratios[j] + q * ses[j])).collect();
        let (_, sets) = max_overlap_sets(&intervals);
        let chosen = pick_by_j(&ctx, sets)?;
        if !candidates.iter().any(|(s, _)| *s == chosen) {
            candidates.push((chosen, q));
        }
    }
    candidates.sort_by_key(|c| std::cmp::Reverse(c.0.len()));
    let sets: Vec<Vec<usize>> = candidates.iter().map(|(s, _)| s.clone()).collect();
    let level = opts.level.unwrap_or_else(|| default_level(data.n()));
    let dt = downward_testing_in(&ctx, &sets, level)?;
    let post = ctx.tsls(&dt.set)?;
    let se = post.se(data, opts.cov_mode);
    let mut report = EstimateReport::wald("cim", post.beta, se, opts.alpha)
        .with_valid_set(dt.set.clone())
        .diag("q", candidates[dt.position].1)
        .diag("j_p_value", dt.p_value)
        .diag("downward_level", level)
        .diag("downward_passed", dt.passed)
        .diag("candidate_sets", candidates.len());
    if !dt.passed {
        report.warn("DownwardTesting: no candidate set passed the J test; smallest candidate returned");
    }
    Ok(report)
}

fn pick_by_j(ctx: &IvContext, sets: Vec<Vec<usize>>) -> Result<Vec<usize>> {
    if sets.len() == 1 || sets[0].len() < 2 {
        return Ok(normalize_set(&sets[0]));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in sets {
        let stat = j_test_in(ctx, &s)?.statistic;
        if best.as_ref().is_none_or(|(b, _)| stat < *b) {
            best = Some((stat, s));
        }
    }
    Ok(best.unwrap().1)
}
