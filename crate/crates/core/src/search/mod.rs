//! Stochastic differentiable architecture search, derivation and retraining.

mod arch;
mod train;

pub use arch::{concrete_weights, draw_open_uniform, mix_darts, sample_architecture, temperature, ArchParams};
pub use train::{
    derived_selection, retrain, search, train_fixed, Objective, RetrainConfig, RetrainOutcome, SearchConfig,
    SearchLog, SearchOutcome, SearchRecord,
};
