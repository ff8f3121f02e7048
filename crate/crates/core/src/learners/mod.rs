//! Nuisance-model machinery: IRLS GLMs, a small learner library and the
//! cross-validated super learner that stacks it.

mod folds;
mod glm;
mod library;
mod nnls;
mod super_learner;

pub use folds::FoldPlan;
pub use glm::{collinear_columns, expit, fit_glm, logit, Family, GlmFit};
pub use library::{Expansion, Features, FittedLearner, LearnerSpec};
pub use nnls::nnls;
pub use super_learner::{fit_super_learner, EnsembleModel};
