//! Estimators that identify the effect through nonlinearity of the exposure model.

pub mod interaction;
pub mod learners;
pub mod tsci;

pub use interaction::{basis_dimension, build_interaction_basis, g_interaction, g_interaction_with, interaction_moments, interaction_subsets, InteractionBasis};
pub use learners::{fit_learner, random_split, ForestOptions, HatMatrixFit, HatOperator, Learner};
pub use tsci::{fit_hat_matrix, tsci, tsci_with, TsciOptions};
