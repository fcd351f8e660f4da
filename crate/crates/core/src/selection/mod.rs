//! Valid-instrument selection followed by pointwise inference.

pub mod cim;
pub mod jtest;
pub mod tsht;

pub use cim::{cim, cim_with, default_q_grid, max_overlap_sets, CimOptions};
pub use jtest::{default_level, downward_testing, j_test, DownwardResult, JTest};
pub use tsht::{summary_gmm, tsht, VotingMatrix};
