//! Confidence sets for the causal effect that remain valid without selection consistency.

pub mod grid;
pub mod sampling;
pub mod searching;
pub mod union;
pub mod weak_iv;

pub use grid::SearchGrid;
pub use sampling::{sampling_ci, sampling_ci_with, sampling_lambda, SamplingCi, SamplingOptions};
pub use searching::{default_grid, searching_ci, valid_count};
pub use union::{union_ci, union_ci_with, InnerMethod, UnionCi, UnionOptions};
