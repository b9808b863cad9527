//! Ordered discrete choice estimation.
//!
//! Two models share one interface ([`model::ChoiceModel`]): the classic
//! ordered logit fitted by maximum likelihood, and Ordinal-ResLogit, which
//! corrects linear utilities with residual softplus layers and predicts ranks
//! through a rank-consistent CORAL head. Around them sit data loading,
//! Jenks discretization, fit diagnostics, elasticities and market shares,
//! synthetic data generators and report rendering.

pub mod data;
pub mod discretize;
pub mod econ;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod model;
pub mod ordered_logit;
pub mod report;
pub mod reslogit;
pub mod synth;

pub use data::{CoefficientMode, Dataset, DesignSpec, Exclusion, ScalingParams};
pub use error::{Error, Result};
pub use model::{ChoiceModel, ChoiceProbs, FittedModel, ModelKind};
pub use ordered_logit::{fit_ordered_logit, OrderedLogitFit, OrderedLogitOptions};
pub use reslogit::{ReslogitFit, ReslogitParams, TrainConfig};
