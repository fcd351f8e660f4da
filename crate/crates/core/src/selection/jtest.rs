use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::linear::iv_core::IvContext;
use crate::linear::tsls::require_centered;
use crate::model::{normalize_set, IVDataset};
use crate::stats;

/// Overidentification test of a candidate valid set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JTest {
    pub statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Sargan statistic of the TSLS fit that treats `valid_set` as valid and the rest of
/// the instruments as controls, referred to chi-square with `|valid_set| - 1` df.
pub fn j_test(data: &IVDataset, valid_set: &[usize]) -> Result<JTest> {
    require_centered(data)?;
    let ctx = IvContext::new(data)?;
    j_test_in(&ctx, valid_set)
}

pub(crate) fn j_test_in(ctx: &IvContext, valid_set: &[usize]) -> Result<JTest> {
    let valid = normalize_set(valid_set);
    if valid.len() < 2 {
        return Err(IvError::Underidentified(valid.len()));
    }
    let fit = ctx.tsls(&valid)?;
    let statistic = ctx.sargan(&fit);
    let df = valid.len() - 1;
    Ok(JTest { statistic, p_value: stats::chi2_sf(df as f64, statistic), df })
}

/// Outcome of downward testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownwardResult {
    pub set: Vec<usize>,
    /// `false` when no candidate passed and the last one was returned.
    pub passed: bool,
    pub p_value: f64,
    /// Position of the returned candidate in the input sequence.
    pub position: usize,
}

/// Default downward-testing level `0.1 / ln(n)`.
pub fn default_level(n: usize) -> f64 {
    0.1 / (n as f64).ln()
}

/// Returns the first candidate whose J-test p-value exceeds `level`.
///
/// Candidates of size one cannot be tested and are accepted as soon as they are reached.
pub fn downward_testing(candidates: &[Vec<usize>], data: &IVDataset, level: f64) -> Result<DownwardResult> {
    require_centered(data)?;
    let ctx = IvContext::new(data)?;
    downward_testing_in(&ctx, candidates, level)
}

pub(crate) fn downward_testing_in(ctx: &IvContext, candidates: &[Vec<usize>], level: f64) -> Result<DownwardResult> {
    if candidates.is_empty() {
        return Err(IvError::InvalidArgument("downward testing needs at least one candidate".into()));
    }
    let mut last_p = 0.0;
    for (position, cand) in candidates.iter().enumerate() {
        let set = normalize_set(cand);
        if set.is_empty() {
            return Err(IvError::EmptyValidSet);
        }
        let p_value = if set.len() == 1 { 1.0 } else { j_test_in(ctx, &set)?.p_value };
        if p_value > level {
            return Ok(DownwardResult { set, passed: true, p_value, position });
        }
        last_p = p_value;
    }
    Ok(DownwardResult {
        set: normalize_set(candidates.last().unwrap()),
        passed: false,
        p_value: last_p,
        position: candidates.len() - 1,
    })
}
