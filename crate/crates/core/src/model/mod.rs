//! Shared data model: datasets, reduced-form fits, reports and interval unions.

mod dataset;
mod gram;
mod interval;
mod reduced_form;
mod report;

pub use dataset::IVDataset;
pub use gram::CrossProducts;
pub use interval::IntervalUnion;
pub use reduced_form::{
    fit_reduced_form, load_summary_stats, CovMode, FitSource, ReducedFormFit, SummaryRecord,
};
pub use report::{Diagnostic, EstimateReport};

/// Sorted, deduplicated instrument index set.
pub fn normalize_set(set: &[usize]) -> Vec<usize> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Complement of `set` within `0..p`.
pub fn complement(set: &[usize], p: usize) -> Vec<usize> {
    (0..p).filter(|j| !set.contains(j)).collect()
}
