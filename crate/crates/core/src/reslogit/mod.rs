//! Ordinal-ResLogit: linear utilities corrected by residual softplus layers
//! and fed to a rank-consistent CORAL head.

mod network;
mod params;
mod train;

pub use network::{
    batch_gradient, batch_loss, choice_prob_input_gradient, choice_probs_from_exceedance,
    coral_exceedance, deterministic_utilities, forward, forward_utilities, gradient, loss,
    observation_gradient, predict_rank, ForwardTrace,
};
pub use params::{ReslogitGradient, ReslogitParams};
pub use train::{
    alpha_grid, best_alpha, fit, EarlyStopMetric, select_alpha, EpochRecord, ReslogitFit, TrainConfig, TRAINING_ALPHA,
};
